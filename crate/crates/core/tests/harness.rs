//! Rate fits, configuration files, reports and small studies.

use twoscale_core::harness::{
    emit_report, fit_rate, run_rate_study, CoefficientConfig, ExperimentConfig, RateStudy, Reliability, CHANNELS,
};
use twoscale_core::Error;

#[test]
fn exact_power_laws_are_recovered() {
    let line: Vec<(f64, f64)> = [0.125, 0.0625, 0.03125].iter().map(|&e| (e, 3.0 * e)).collect();
    let fit = fit_rate(&line).unwrap();
    assert!((fit.slope - 1.0).abs() < 1e-12);
    assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-12);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
    assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));

    let root: Vec<(f64, f64)> = [0.125, 0.0625, 0.03125, 0.015625].iter().map(|&e: &f64| (e, e.sqrt())).collect();
    assert!((fit_rate(&root).unwrap().slope - 0.5).abs() < 1e-12);
}

#[test]
fn noisy_points_lower_r_squared() {
    let pts = [(0.125, 0.125), (0.0625, 0.09), (0.03125, 0.03125)];
    let fit = fit_rate(&pts).unwrap();
    assert!(fit.r_squared < 1.0 && fit.r_squared > 0.5);
    assert!(fit.residuals.iter().sum::<f64>().abs() < 1e-12);
}

#[test]
fn bad_fits_are_rejected() {
    assert!(matches!(fit_rate(&[(0.5, 1.0), (0.25, 0.5)]), Err(Error::FitUnderdetermined(2))));
    assert!(matches!(
        fit_rate(&[(0.5, 1.0), (0.25, 0.0), (0.125, 0.1)]),
        Err(Error::NonpositiveError(_))
    ));
    assert!(fit_rate(&[(0.5, 1.0), (0.5, 0.5), (0.5, 0.1)]).is_err());
}

fn small_laminate() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::laminate_default();
    cfg.name = "small".into();
    cfg.cell_n = 32;
    cfg.cells_per_period = 8;
    cfg.epsilons = vec![0.25, 0.125, 0.0625];
    cfg.parallelism = 1;
    cfg
}

#[test]
fn configuration_survives_a_toml_round_trip() {
    let cfg = ExperimentConfig::laminate_default();
    let text = cfg.to_toml_string().unwrap();
    assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
}

#[test]
fn shipped_configurations_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["constant.toml", "laminate.toml", "neumann.toml"] {
        let cfg = ExperimentConfig::from_file(&dir.join(name)).unwrap();
        cfg.validate().unwrap();
    }
    let laminate = ExperimentConfig::from_file(&dir.join("laminate.toml")).unwrap();
    assert_eq!(laminate, ExperimentConfig::laminate_default());
}

#[test]
fn invalid_configurations_are_rejected() {
    let mut cfg = small_laminate();
    cfg.epsilons = vec![0.25, 0.1];
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));

    let mut cfg = small_laminate();
    cfg.epsilons = vec![0.0625, 0.125];
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));

    let mut cfg = small_laminate();
    cfg.cells_per_period = 4;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));

    let mut cfg = small_laminate();
    cfg.windows.insert("err_H2".into(), [0.0, 1.0]);
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));

    let mut cfg = small_laminate();
    cfg.coefficient = CoefficientConfig::Constant { lambda: 1.0, mu: -1.0 };
    assert!(cfg.validate().is_err());

    assert!(matches!(
        ExperimentConfig::from_toml_str("epsilons = [0.5]\nbogus = 1\n"),
        Err(Error::Config(_))
    ));
}

#[test]
fn empty_study_gives_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut out = small_laminate().output;
    out.plot = false;
    let paths = out.resolve(dir.path());
    let written = emit_report(&RateStudy::default(), &paths).unwrap();
    assert_eq!(written.len(), 2);
    assert!(paths.svg.is_none());
    assert!(!dir.path().join("rates.svg").exists());

    let csv = std::fs::read_to_string(&paths.csv).unwrap();
    assert_eq!(csv.lines().count(), 1, "{csv}");
    assert!(csv.starts_with("epsilon,"));

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&paths.json).unwrap()).unwrap();
    assert_eq!(json["channels"], serde_json::json!({}));
    assert_eq!(json["plot"], serde_json::json!(false));
}

#[test]
fn small_study_reports_every_run_and_channel() {
    let study = run_rate_study(&small_laminate()).unwrap();
    assert!(study.gaps.is_empty());
    assert_eq!(study.runs.len(), 3);
    assert_eq!(study.channels.len(), CHANNELS.len());
    for c in study.channels.values() {
        assert_eq!(c.points.len(), 3);
        assert!(c.fit.is_some());
        assert!(c.points.iter().all(|p| p.1 > 0.0 && p.1.is_finite()));
    }
    for run in &study.runs {
        assert!(run.certificate.informative);
        assert_eq!(run.certificate.floors.len(), CHANNELS.len());
        assert!(run.orthogonality.is_none());
    }

    let dir = tempfile::tempdir().unwrap();
    let paths = small_laminate().output.resolve(dir.path());
    let written = emit_report(&study, &paths).unwrap();
    assert_eq!(written.len(), 3);
    let csv = std::fs::read_to_string(&paths.csv).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let svg = std::fs::read_to_string(paths.svg.unwrap()).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn constant_study_sits_on_the_floor() {
    let mut cfg = small_laminate();
    cfg.coefficient = CoefficientConfig::Constant { lambda: 1.0, mu: 1.0 };
    cfg.cell_n = 16;
    let study = run_rate_study(&cfg).unwrap();
    for run in &study.runs {
        assert!(run.report.err_l2_u0 < 1e-6, "{}", run.report.err_l2_u0);
    }
    for (name, c) in &study.channels {
        assert_ne!(c.reliability, Reliability::Reliable, "{name}");
    }
}
