//! Rate studies over a list of `epsilon` values: configuration, orchestration,
//! log-log fits and report files.

mod config;
mod fit;
mod report;
mod study;
mod verify;

pub use config::{
    CoefficientConfig, DataConfig, DomainConfig, ExperimentConfig, MollifierKind, OutputConfig, OutputPaths,
    PreconditionerChoice, Recipe, RichardsonConfig, SolverConfig, CHANNELS, MIN_CELLS_PER_PERIOD,
};
pub use fit::{fit_rate, RateFit};
pub use report::{emit_report, render_svg, summary_json, write_csv};
pub use study::{
    prepare, run_rate_study, CellSummary, Certificate, ChannelSummary, EpsilonRun, Gap, RateStudy, Reliability,
    StudyContext, ORTHOGONALITY_TOL,
};
pub use verify::{laminate_disagreement, manufactured_errors, run_verification, Check};
