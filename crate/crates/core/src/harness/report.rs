//! CSV, JSON and SVG output of a rate study.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::config::OutputPaths;
use super::study::RateStudy;
use crate::error::{Error, Result};
use crate::twoscale::TwoScaleReport;

/// One CSV row per report, in input order.
pub fn write_csv(reports: &[TwoScaleReport], path: &Path) -> Result<()> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(err) => Error::io(path, err),
        other => Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, format!("{other:?}"))),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(TwoScaleReport::CSV_HEADER).map_err(io)?;
    for r in reports {
        w.write_record(r.csv_row()).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// The JSON summary: per-channel fits with window verdicts, per-run
/// certificates, gaps and the cell data. Contains no timings, so equal
/// inputs give equal bytes.
pub fn summary_json(study: &RateStudy, plot: bool) -> Value {
    let channels: BTreeMap<&str, Value> = study
        .channels
        .iter()
        .map(|(name, c)| {
            (
                name.as_str(),
                json!({
                    "slope": c.fit.as_ref().map(|f| f.slope),
                    "intercept": c.fit.as_ref().map(|f| f.intercept),
                    "r2": c.fit.as_ref().map(|f| f.r_squared),
                    "residuals": c.fit.as_ref().map(|f| f.residuals.clone()),
                    "fit_error": c.fit_error,
                    "window": c.window,
                    "window_pass": c.window_pass,
                    "reliability": c.reliability,
                    "points": c.points,
                    "excluded": c.excluded,
                }),
            )
        })
        .collect();
    let runs: Vec<Value> = study
        .runs
        .iter()
        .map(|r| {
            json!({
                "epsilon": r.epsilon,
                "h": r.h,
                "nodes": r.nodes,
                "report": r.report,
                "certificate": r.certificate,
                "iterations": r.iterations,
                "orthogonality": r.orthogonality,
                "compatibility": r.compatibility,
            })
        })
        .collect();
    let cell = study.cell.as_ref().map(|c| {
        json!({
            "a_hat": Value::Object(c.a_hat.to_json_map("a_hat")),
            "identities": c.identities,
            "ellipticity": [c.ellipticity.0, c.ellipticity.1],
        })
    });
    json!({
        "name": study.name,
        "seed": study.seed,
        "channels": channels,
        "runs": runs,
        "gaps": study.gaps,
        "cell": cell,
        "certificates_pass": study.certificates_pass(),
        "orthogonality_pass": study.orthogonality_pass(),
        "all_pass": study.all_pass(),
        "plot": plot,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the CSV, the JSON summary and, when requested, the SVG plot.
/// Returns the paths written.
pub fn emit_report(study: &RateStudy, paths: &OutputPaths) -> Result<Vec<PathBuf>> {
    if let Some(dir) = paths.csv.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    write_csv(&study.reports(), &paths.csv)?;
    let summary = summary_json(study, paths.svg.is_some());
    let text = serde_json::to_string_pretty(&summary).expect("summary is plain JSON") + "\n";
    write_text(&paths.json, &text)?;
    let mut written = vec![paths.csv.clone(), paths.json.clone()];
    if let Some(svg) = &paths.svg {
        write_text(svg, &render_svg(study))?;
        written.push(svg.clone());
    }
    Ok(written)
}

struct Bounds {
    x: [f64; 2],
    y: [f64; 2],
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Log-log plot of every channel with guide lines of slope 1/2 and 1.
pub fn render_svg(study: &RateStudy) -> String {
    let (w, h, m) = (640.0, 480.0, 60.0);
    let pts: Vec<(f64, f64)> = study
        .channels
        .values()
        .flat_map(|c| c.points.iter().copied())
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|(e, v)| (e.log10(), v.log10()))
        .collect();
    let mut b = Bounds {
        x: [-2.0, -0.5],
        y: [-4.0, 0.0],
    };
    if !pts.is_empty() {
        b.x = [pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min), pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max)];
        b.y = [pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min), pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)];
        let pad_x = 0.1 * (b.x[1] - b.x[0]).max(0.1);
        let pad_y = 0.1 * (b.y[1] - b.y[0]).max(0.1);
        b.x = [b.x[0] - pad_x, b.x[1] + pad_x];
        b.y = [b.y[0] - pad_y, b.y[1] + pad_y];
    }
    let sx = |x: f64| m + (x - b.x[0]) / (b.x[1] - b.x[0]) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - b.y[0]) / (b.y[1] - b.y[0]) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">log10 epsilon</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">log10 error</text>"#,
        h / 2.0,
        h / 2.0
    );
    // Guides through the center of the plot.
    let (cx, cy) = (0.5 * (b.x[0] + b.x[1]), 0.5 * (b.y[0] + b.y[1]));
    for (slope, dash) in [(0.5, "6,4"), (1.0, "2,3")] {
        let (x0, x1) = (b.x[0], b.x[1]);
        let (y0, y1) = (cy + slope * (x0 - cx), cy + slope * (x1 - cx));
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="{dash}"/>"#,
            sx(x0),
            sy(y0),
            sx(x1),
            sy(y1)
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" fill="gray">slope {slope}</text>"#, sx(x1) - 60.0, sy(y1) - 4.0);
    }
    for (k, (name, c)) in study.channels.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut line = String::new();
        for &(e, v) in c.points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0) {
            let (px, py) = (sx(e.log10()), sy(v.log10()));
            let _ = write!(line, "{px:.2},{py:.2} ");
            let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{color}"/>"#);
        }
        if !line.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}"/>"#, line.trim_end());
        }
        let slope = c.fit.as_ref().map_or("n/a".to_string(), |f| format!("{:.3}", f.slope));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{name} (slope {slope})</text>"#,
            m + 10.0,
            m + 18.0 * (k as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}
