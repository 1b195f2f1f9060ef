use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Lamé moduli (lambda = {lambda}, mu = {mu}): need mu > 0 and lambda + 2 mu / d > 0")]
    InvalidModuli { lambda: f64, mu: f64 },

    #[error("coefficient field is not elliptic: symmetric quotient {quotient:e} at y = {y:?}")]
    NonElliptic { quotient: f64, y: Vec<f64> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("iterative solver stalled: relative residual {residual:e} > tol {tol:e} after {iterations} iterations")]
    SolverDiverged {
        tol: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("homogenized tensor symmetry residual {residual:e} exceeds {tol:e}")]
    SymmetryResidualExceeded { residual: f64, tol: f64 },

    #[error("flux discrepancy divergence residual {residual:e} exceeds {tol:e}")]
    DivergenceResidualTooLarge { residual: f64, tol: f64 },

    #[error("mesh size {h} does not divide side length {length}")]
    NonconformingMeshSize { h: f64, length: f64 },

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("incompatible Neumann data: residuals {residuals:?} exceed {tol:e}")]
    IncompatibleData { residuals: Vec<f64>, tol: f64 },

    #[error("padding {available} is smaller than the required margin {required}")]
    InsufficientPadding { available: f64, required: f64 },

    #[error("resolution mismatch: {0}")]
    ResolutionMismatch(String),

    #[error("laminate phase {phase} has a singular normal block")]
    SingularBlock { phase: usize },

    #[error("refined problem needs {requested} nodes, budget is {budget}")]
    ResolutionBudgetExceeded { requested: usize, budget: usize },

    #[error("rate fit needs at least 3 points, got {0}")]
    FitUnderdetermined(usize),

    #[error("rate fit needs positive errors, got {0:e}")]
    NonpositiveError(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o failure at {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }
}
