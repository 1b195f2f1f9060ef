//! `twoscale`: cell problems, single solves, rate studies and the oracle
//! suite from the command line.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use twoscale_core::fem::{self, Coefficient};
use twoscale_core::harness::{emit_report, prepare, run_rate_study, run_verification, ExperimentConfig};
use twoscale_core::tensors::tensor_bounds;

#[derive(Parser)]
#[command(name = "twoscale", version, about = "Two-scale expansion studies for periodic elasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the cell problems and print the homogenized tensor and the
    /// cell identity residuals.
    Cell {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the cell grid size.
        #[arg(long)]
        n: Option<usize>,
        /// Write `cell.json` here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the fine-scale (or homogenized) problem at one epsilon.
    Solve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epsilon: f64,
        /// Solve with the homogenized coefficient instead.
        #[arg(long)]
        homogenized: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the epsilon sweep and write CSV, JSON and SVG reports. Exits
    /// non-zero unless every configured window passes.
    Rates {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compare the solvers against the independent oracles.
    Verify {
        /// Coarser cell grids.
        #[arg(long)]
        quick: bool,
    },
}

fn load(config: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match config {
        Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(ExperimentConfig::laminate_default()),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cell(config: &Option<PathBuf>, n: Option<usize>, out: &Option<PathBuf>) -> Result<bool> {
    let mut cfg = load(config)?;
    if let Some(n) = n {
        cfg.cell_n = n;
    }
    let (ctx, summary) = prepare(&cfg)?;
    let (k1, k2) = tensor_bounds(&ctx.a_hat);
    let value = json!({
        "coefficient": cfg.coefficient,
        "cell_n": cfg.cell_n,
        "a_hat": serde_json::Value::Object(ctx.a_hat.to_json_map("a_hat")),
        "bounds": [k1, k2],
        "identities": summary.identities,
    });
    println!("{}", serde_json::to_string_pretty(&value)?);
    if let Some(dir) = out {
        write_json(&dir.join("cell.json"), &value)?;
    }
    Ok(summary.identities.all_pass())
}

fn solve(config: &Option<PathBuf>, epsilon: f64, homogenized: bool, out: &Path) -> Result<bool> {
    let mut cfg = load(config)?;
    if !cfg.epsilons.iter().any(|&e| e == epsilon) {
        cfg.epsilons = vec![epsilon];
    }
    let (ctx, _) = prepare(&cfg)?;
    let mut spec = ctx.problem(epsilon)?;
    if homogenized {
        spec = spec.with_coefficient(Coefficient::Constant(ctx.a_hat.clone()));
    }
    let sol = fem::solve(&spec, ctx.solver_options())?;
    std::fs::create_dir_all(out)?;
    let csv_path = out.join("solution.csv");
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(&csv_path).with_context(|| format!("writing {}", csv_path.display()))?,
    );
    writeln!(w, "x,y,u1,u2")?;
    for node in 0..spec.mesh.node_count() {
        let x = spec.mesh.node_coord(node);
        writeln!(w, "{:e},{:e},{:e},{:e}", x[0], x[1], sol.u[2 * node], sol.u[2 * node + 1])?;
    }
    w.flush()?;
    let stats = json!({
        "epsilon": epsilon,
        "homogenized": homogenized,
        "mode": spec.mode,
        "nx": spec.mesh.nx(),
        "ny": spec.mesh.ny(),
        "iterations": sol.stats.iterations,
        "residual": sol.stats.residual,
        "orthogonality": sol.orthogonality,
    });
    write_json(&out.join("stats.json"), &stats)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(true)
}

fn rates(config: &Option<PathBuf>, out: &Path) -> Result<bool> {
    let cfg = load(config)?;
    let study = run_rate_study(&cfg)?;
    let written = emit_report(&study, &cfg.output.resolve(out))?;
    println!("{:>10} {:>12} {:>12} {:>12} {:>12} {:>8}", "epsilon", "err_L2_u0", "err_H1_w", "err_weighted", "err_interior", "cert");
    for r in &study.runs {
        println!(
            "{:>10.6} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.4}",
            r.epsilon,
            r.report.err_l2_u0,
            r.report.err_h1_w,
            r.report.err_weighted,
            r.report.err_interior,
            r.certificate.ratios.get("err_L2_u0").copied().unwrap_or(f64::NAN)
        );
    }
    for g in &study.gaps {
        println!("gap at epsilon = {}: {}", g.epsilon, g.error);
    }
    for (name, c) in &study.channels {
        let slope = c.fit.as_ref().map_or("n/a".into(), |f| format!("{:.3}", f.slope));
        let window = c.window.map_or("-".into(), |w| format!("[{}, {}]", w[0], w[1]));
        let verdict = match c.window {
            Some(_) if c.window_pass => "PASS",
            Some(_) => "FAIL",
            None => "",
        };
        println!("{name:<14} slope {slope:>7} window {window:<14} {:?} {verdict}", c.reliability);
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(study.all_pass())
}

fn verify(quick: bool) -> Result<bool> {
    let checks = run_verification(quick)?;
    for c in &checks {
        println!(
            "{} {:<48} {:>12.4e}  accept [{:e}, {:e}]",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.accept[0],
            c.accept[1]
        );
    }
    Ok(checks.iter().all(|c| c.pass))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Cell { config, n, out } => cell(config, *n, out),
        Command::Solve {
            config,
            epsilon,
            homogenized,
            out,
        } => solve(config, *epsilon, *homogenized, out),
        Command::Rates { config, out } => rates(config, out),
        Command::Verify { quick } => verify(*quick),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
