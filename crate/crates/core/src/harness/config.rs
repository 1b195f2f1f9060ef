//! Experiment configuration, read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::manufactured::SmoothField;
use crate::mesh::{BoundaryPartition, DomainSpec, Edge};
use crate::tensors::{isotropic_tensor, CoefficientField};

/// Named members of the coefficient catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientConfig {
    Constant {
        lambda: f64,
        mu: f64,
    },
    Laminate {
        lambda: f64,
        mu: f64,
        contrast: f64,
        #[serde(default)]
        direction: usize,
    },
    Checkerboard {
        lambda: f64,
        mu: f64,
        contrast: f64,
    },
    SmoothTrig {
        lambda: f64,
        mu: f64,
        amplitude: f64,
    },
}

impl CoefficientConfig {
    pub fn build(&self) -> Result<CoefficientField> {
        match *self {
            CoefficientConfig::Constant { lambda, mu } => CoefficientField::constant(isotropic_tensor(lambda, mu)?),
            CoefficientConfig::Laminate {
                lambda,
                mu,
                contrast,
                direction,
            } => CoefficientField::laminate_contrast(2, direction, lambda, mu, contrast),
            CoefficientConfig::Checkerboard { lambda, mu, contrast } => {
                CoefficientField::checkerboard(2, lambda, mu, contrast)
            }
            CoefficientConfig::SmoothTrig { lambda, mu, amplitude } => {
                CoefficientField::smooth_trig(2, lambda, mu, amplitude)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default = "unit_lower")]
    pub lower: [f64; 2],
    #[serde(default = "unit_upper")]
    pub upper: [f64; 2],
    /// Edges carrying displacement data; ignored when `neumann` is set.
    #[serde(default)]
    pub dirichlet: Vec<Edge>,
    /// Pure traction problem.
    #[serde(default)]
    pub neumann: bool,
}

fn unit_lower() -> [f64; 2] {
    [0.0, 0.0]
}

fn unit_upper() -> [f64; 2] {
    [1.0, 1.0]
}

impl DomainConfig {
    pub fn domain(&self) -> Result<DomainSpec> {
        DomainSpec::new(self.lower, self.upper)
    }

    pub fn partition(&self) -> Result<BoundaryPartition> {
        if self.neumann {
            if !self.dirichlet.is_empty() {
                return Err(Error::Config("`neumann = true` excludes a Dirichlet edge list".into()));
            }
            Ok(BoundaryPartition::pure_neumann())
        } else {
            BoundaryPartition::mixed(&self.dirichlet)
        }
    }
}

/// How the data `(F, f, g)` are produced from a smooth target `U`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    /// `F = -div(A_hat grad U)`, `f = U`, `g = n . A_hat grad U`; then `u_0 = U`.
    Manufactured,
    /// `F = 0`, `f = U`, `g = n . A_hat grad U`.
    BoundaryOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "default_recipe")]
    pub recipe: Recipe,
    #[serde(default = "default_field")]
    pub field: SmoothField,
}

fn default_recipe() -> Recipe {
    Recipe::Manufactured
}

fn default_field() -> SmoothField {
    SmoothField::Trig
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            recipe: default_recipe(),
            field: default_field(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MollifierKind {
    /// The normalized bump `exp(-1 / (1 - |2x|^2))`.
    #[default]
    Bump,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerChoice {
    #[default]
    Multigrid,
    Jacobi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_fem_tol")]
    pub fem_tol: f64,
    #[serde(default = "default_cell_tol")]
    pub cell_tol: f64,
    #[serde(default)]
    pub preconditioner: PreconditionerChoice,
}

fn default_fem_tol() -> f64 {
    1e-10
}

fn default_cell_tol() -> f64 {
    1e-10
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            fem_tol: default_fem_tol(),
            cell_tol: default_cell_tol(),
            preconditioner: PreconditionerChoice::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RichardsonConfig {
    /// 1 disables the certificate, 2 or 4 refine.
    #[serde(default = "default_refinement")]
    pub refinement: usize,
    /// Largest certificate-to-error ratio accepted.
    #[serde(default = "default_max_ratio")]
    pub max_ratio: f64,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
}

fn default_refinement() -> usize {
    2
}

fn default_max_ratio() -> f64 {
    0.1
}

fn default_max_nodes() -> usize {
    20_000_000
}

impl Default for RichardsonConfig {
    fn default() -> Self {
        Self {
            refinement: default_refinement(),
            max_ratio: default_max_ratio(),
            max_nodes: default_max_nodes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_csv")]
    pub csv: PathBuf,
    #[serde(default = "default_json")]
    pub json: PathBuf,
    #[serde(default = "default_svg")]
    pub svg: PathBuf,
    #[serde(default = "default_plot")]
    pub plot: bool,
}

fn default_csv() -> PathBuf {
    "rates.csv".into()
}

fn default_json() -> PathBuf {
    "summary.json".into()
}

fn default_svg() -> PathBuf {
    "rates.svg".into()
}

fn default_plot() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            csv: default_csv(),
            json: default_json(),
            svg: default_svg(),
            plot: default_plot(),
        }
    }
}

impl OutputConfig {
    /// Paths resolved against an output directory.
    pub fn resolve(&self, dir: &Path) -> OutputPaths {
        OutputPaths {
            csv: dir.join(&self.csv),
            json: dir.join(&self.json),
            svg: self.plot.then(|| dir.join(&self.svg)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub svg: Option<PathBuf>,
}

/// Everything a rate study needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub coefficient: CoefficientConfig,
    pub domain: DomainConfig,
    #[serde(default)]
    pub data: DataConfig,
    /// Strictly decreasing negative powers of two.
    pub epsilons: Vec<f64>,
    #[serde(default = "default_cell_n")]
    pub cell_n: usize,
    /// Mesh cells per period, `h = eps / k`.
    #[serde(default = "default_k")]
    pub cells_per_period: usize,
    #[serde(default)]
    pub mollifier: MollifierKind,
    #[serde(default = "default_margin")]
    pub interior_margin: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub richardson: RichardsonConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Worker threads across epsilon values; 0 uses every core.
    #[serde(default)]
    pub parallelism: usize,
    /// Accepted slope interval per error channel.
    #[serde(default)]
    pub windows: BTreeMap<String, [f64; 2]>,
}

fn default_name() -> String {
    "study".into()
}

fn default_cell_n() -> usize {
    256
}

fn default_k() -> usize {
    16
}

fn default_margin() -> f64 {
    0.25
}

/// Smallest accepted number of mesh cells per period.
pub const MIN_CELLS_PER_PERIOD: usize = 8;

/// The error channels a study fits.
pub const CHANNELS: [&str; 4] = ["err_L2_u0", "err_H1_w", "err_weighted", "err_interior"];

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The laminate study: contrast 5 along `y_1`, unit square with
    /// displacement data on the left and bottom edges.
    pub fn laminate_default() -> Self {
        let windows = [
            ("err_L2_u0", [0.85, 1.15]),
            ("err_H1_w", [0.40, 0.70]),
            ("err_weighted", [0.80, 1.20]),
            ("err_interior", [0.80, 1.20]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            name: "laminate".into(),
            seed: 7,
            coefficient: CoefficientConfig::Laminate {
                lambda: 1.0,
                mu: 1.0,
                contrast: 5.0,
                direction: 0,
            },
            domain: DomainConfig {
                lower: unit_lower(),
                upper: unit_upper(),
                dirichlet: vec![Edge::Left, Edge::Bottom],
                neumann: false,
            },
            data: DataConfig::default(),
            epsilons: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
            cell_n: default_cell_n(),
            cells_per_period: default_k(),
            mollifier: MollifierKind::Bump,
            interior_margin: default_margin(),
            solver: SolverConfig::default(),
            richardson: RichardsonConfig::default(),
            output: OutputConfig::default(),
            parallelism: 0,
            windows,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::Config("epsilon list is empty".into()));
        }
        for &e in &self.epsilons {
            let m = -e.log2();
            if !(e > 0.0 && e < 1.0) || (m - m.round()).abs() > 1e-12 {
                return Err(Error::Config(format!("epsilon {e} is not a negative power of two")));
            }
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("epsilon list must be strictly decreasing".into()));
        }
        if self.cells_per_period < MIN_CELLS_PER_PERIOD {
            return Err(Error::Config(format!(
                "cells_per_period = {} is below {MIN_CELLS_PER_PERIOD}",
                self.cells_per_period
            )));
        }
        let domain = self.domain.domain()?;
        self.domain.partition()?;
        for &e in &self.epsilons {
            let h = e / self.cells_per_period as f64;
            for axis in 0..2 {
                let cells = domain.length(axis) / h;
                if (cells - cells.round()).abs() > 1e-8 * cells {
                    return Err(Error::Config(format!(
                        "h = {h} does not divide the side length {}",
                        domain.length(axis)
                    )));
                }
            }
        }
        if self.cell_n < 16 || !self.cell_n.is_power_of_two() {
            return Err(Error::Config(format!("cell_n = {} must be a power of two >= 16", self.cell_n)));
        }
        if !(self.interior_margin > 0.0) {
            return Err(Error::Config("interior_margin must be positive".into()));
        }
        if !(self.solver.fem_tol > 0.0) || !(self.solver.cell_tol > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if ![1, 2, 4].contains(&self.richardson.refinement) {
            return Err(Error::Config("richardson.refinement must be 1, 2 or 4".into()));
        }
        for (name, w) in &self.windows {
            if !CHANNELS.contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown window channel `{name}`")));
            }
            if !(w[0] <= w[1]) {
                return Err(Error::Config(format!("window for `{name}` is empty")));
            }
        }
        self.coefficient.build()?;
        Ok(())
    }
}
