//! Runs a rate study from a TOML file, or the default laminate study, and
//! prints the per-epsilon errors and fitted slopes.

use twoscale_core::harness::{run_rate_study, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = match std::env::args().nth(1) {
        Some(path) if !path.is_empty() => ExperimentConfig::from_file(path.as_ref())?,
        _ => ExperimentConfig::laminate_default(),
    };
    if let Some(n) = std::env::args().nth(2) {
        cfg.epsilons.truncate(n.parse()?);
    }
    let t = std::time::Instant::now();
    let study = run_rate_study(&cfg)?;
    for r in &study.runs {
        println!(
            "eps {:.5}  L2 {:.3e}  H1w {:.3e}  wt {:.3e}  int {:.3e}  layer {:.3e} bulk {:.3e} cext {:.2}  cert {:?}",
            r.epsilon,
            r.report.err_l2_u0,
            r.report.err_h1_w,
            r.report.err_weighted,
            r.report.err_interior,
            r.report.layer_h1_w,
            r.report.bulk_h1_w,
            r.report.c_ext,
            r.certificate.ratios
        );
    }
    for (name, c) in &study.channels {
        println!("{name}: {:?} {:?} pass {}", c.fit.as_ref().map(|f| f.slope), c.reliability, c.window_pass);
    }
    println!("gaps {:?}\nall_pass {} in {:.1?}", study.gaps, study.all_pass(), t.elapsed());
    Ok(())
}
