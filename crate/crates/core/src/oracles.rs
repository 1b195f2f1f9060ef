//! Independent reference computations: the closed-form laminate cell
//! solution and Richardson-certified fine-mesh references.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{self, h1_seminorm_squared, l2_norm, Coefficient, DiscreteSolution, MixedProblemSpec, SolverOptions};
use crate::tensors::{wrap_cell, ElasticityTensor};

/// Piecewise-constant phases along one cell axis. Phase `p` occupies
/// `(breakpoints[p], breakpoints[p + 1]]`, the last one wrapping to
/// `breakpoints[0] + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaminateProfile {
    pub direction: usize,
    pub breakpoints: Vec<f64>,
    pub phases: Vec<ElasticityTensor>,
}

impl LaminateProfile {
    pub fn new(d: usize, direction: usize, breakpoints: Vec<f64>, phases: Vec<ElasticityTensor>) -> Result<Self> {
        let p = Self {
            direction,
            breakpoints,
            phases,
        };
        p.validate()?;
        if p.dim() != d {
            return Err(Error::InvalidArgument(format!(
                "laminate phases have dimension {}, expected {d}",
                p.dim()
            )));
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.phases.first().map(|t| t.dim()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.phases.is_empty() || self.phases.len() != self.breakpoints.len() {
            return bad("laminate needs one breakpoint per phase".into());
        }
        let d = self.dim();
        if self.phases.iter().any(|t| t.dim() != d) {
            return bad("laminate phases disagree on dimension".into());
        }
        if self.direction >= d {
            return bad(format!("laminate direction {} out of range for d = {d}", self.direction));
        }
        let b = &self.breakpoints;
        if b.iter().any(|&x| !(-0.5..=0.5).contains(&x)) {
            return bad("laminate breakpoints must lie in [-1/2, 1/2]".into());
        }
        if b.windows(2).any(|w| w[0] >= w[1]) || b[b.len() - 1] >= b[0] + 1.0 {
            return bad("laminate breakpoints must be strictly increasing".into());
        }
        Ok(())
    }

    /// Volume fraction of every phase.
    pub fn volumes(&self) -> Vec<f64> {
        let b = &self.breakpoints;
        let m = b.len();
        (0..m)
            .map(|p| if p + 1 < m { b[p + 1] - b[p] } else { b[0] + 1.0 - b[p] })
            .collect()
    }

    /// Index of the phase containing the lamination coordinate `c`.
    pub fn phase_at(&self, c: f64) -> usize {
        let c = wrap_cell(c);
        let b = &self.breakpoints;
        if c <= b[0] {
            return b.len() - 1;
        }
        b.iter().rposition(|&x| x < c).unwrap_or(b.len() - 1)
    }
}

/// Exact cell solution of a laminate.
#[derive(Clone, Debug)]
pub struct LaminateOracle {
    pub direction: usize,
    /// `slopes[p][j * d + beta][gamma]` is `d chi_j^{gamma beta} / d y_direction`
    /// inside phase `p`; all other derivatives vanish.
    pub slopes: Vec<Vec<Vec<f64>>>,
    pub homogenized: ElasticityTensor,
}

impl LaminateOracle {
    pub fn slope(&self, phase: usize, j: usize, beta: usize, gamma: usize) -> f64 {
        let d = self.homogenized.dim();
        self.slopes[phase][j * d + beta][gamma]
    }
}

/// Solves the one-dimensional reduction of the cell problem exactly.
///
/// With `e` the lamination axis and `N(y) = a_{ee}^{alpha gamma}(y)` the
/// normal block, flux continuity gives `N chi' + a_{ej}^{. beta} = c` with a
/// constant `c` fixed by the zero mean of `chi'`, i.e. `c` is a harmonic-type
/// average of the normal blocks.
pub fn laminate_cell_oracle(profile: &LaminateProfile) -> Result<LaminateOracle> {
    profile.validate()?;
    let d = profile.dim();
    let e = profile.direction;
    let vols = profile.volumes();
    let mut inv_blocks = Vec::with_capacity(profile.phases.len());
    for (p, t) in profile.phases.iter().enumerate() {
        let block = DMatrix::from_fn(d, d, |al, ga| t.get(e, e, al, ga));
        let inv = block
            .clone()
            .try_inverse()
            .filter(|_| block.determinant().abs() > 1e-14 * block.norm().powi(d as i32))
            .ok_or(Error::SingularBlock { phase: p })?;
        inv_blocks.push(inv);
    }
    let mean_inv = inv_blocks
        .iter()
        .zip(&vols)
        .fold(DMatrix::zeros(d, d), |acc, (m, v)| acc + m * *v);
    let mean_inv_inv = mean_inv.try_inverse().ok_or(Error::SingularBlock { phase: 0 })?;

    let nphase = profile.phases.len();
    let mut slopes = vec![vec![vec![0.0; d]; d * d]; nphase];
    for j in 0..d {
        for be in 0..d {
            let loads: Vec<DVector<f64>> = profile
                .phases
                .iter()
                .map(|t| DVector::from_fn(d, |al, _| t.get(e, j, al, be)))
                .collect();
            let weighted = inv_blocks
                .iter()
                .zip(&loads)
                .zip(&vols)
                .fold(DVector::zeros(d), |acc, ((m, l), v)| acc + m * l * *v);
            let c = &mean_inv_inv * weighted;
            for p in 0..nphase {
                let s = &inv_blocks[p] * (&c - &loads[p]);
                slopes[p][j * d + be] = s.iter().cloned().collect();
            }
        }
    }
    let homogenized = ElasticityTensor::from_fn(d, |i, j, al, be| {
        (0..nphase)
            .map(|p| {
                let t = &profile.phases[p];
                let corr: f64 = (0..d).map(|ga| t.get(i, e, al, ga) * slopes[p][j * d + be][ga]).sum();
                vols[p] * (t.get(i, j, al, be) + corr)
            })
            .sum()
    });
    Ok(LaminateOracle {
        direction: e,
        slopes,
        homogenized,
    })
}

/// Volume-weighted harmonic mean, the homogenized coefficient of a scalar
/// one-dimensional laminate.
pub fn harmonic_mean(values: &[f64], volumes: &[f64]) -> f64 {
    let total: f64 = volumes.iter().sum();
    total / values.iter().zip(volumes).map(|(a, v)| v / a).sum::<f64>()
}

/// Finest resolution a reference solve may reach, in cells per period.
pub const REFERENCE_CELLS_PER_PERIOD: usize = 16;

/// A solution together with a refined companion and the Richardson estimates
/// of the coarse solution's discretization error.
#[derive(Clone, Debug, Serialize)]
pub struct FineReference {
    pub coarse: DiscreteSolution,
    pub fine: DiscreteSolution,
    pub refinement: usize,
    /// `|P u_h - u_{h/r}|_{L^2} r^2 / (r^2 - 1)`
    pub estimate_l2: f64,
    /// `|P u_h - u_{h/r}|_{H^1} r / (r - 1)`
    pub estimate_h1: f64,
    /// False for `refinement = 1`, where nothing is learned.
    pub informative: bool,
}

/// Limits on a refined solve.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ReferenceBudget {
    pub max_nodes: usize,
}

impl Default for ReferenceBudget {
    fn default() -> Self {
        Self { max_nodes: 20_000_000 }
    }
}

/// Solves `spec` and its `refinement`-times refined copy.
pub fn fine_reference(spec: &MixedProblemSpec, refinement: usize, budget: ReferenceBudget) -> Result<FineReference> {
    let opts = SolverOptions::new(fem::DEFAULT_FEM_TOL);
    let coarse = fem::solve(spec, opts)?;
    fine_reference_from(spec, coarse, refinement, budget, opts)
}

/// As [`fine_reference`], reusing an existing solution on `spec.mesh`.
pub fn fine_reference_from(
    spec: &MixedProblemSpec,
    coarse: DiscreteSolution,
    refinement: usize,
    budget: ReferenceBudget,
    opts: SolverOptions,
) -> Result<FineReference> {
    if ![1, 2, 4].contains(&refinement) {
        return Err(Error::InvalidArgument(format!("refinement must be 1, 2 or 4, got {refinement}")));
    }
    if coarse.u.len() != 2 * spec.mesh.node_count() {
        return Err(Error::InvalidArgument("coarse solution does not match the mesh".into()));
    }
    if refinement == 1 {
        return Ok(FineReference {
            fine: coarse.clone(),
            coarse,
            refinement,
            estimate_l2: 0.0,
            estimate_h1: 0.0,
            informative: false,
        });
    }
    let mesh = spec.mesh.refined(refinement)?;
    if mesh.node_count() > budget.max_nodes {
        return Err(Error::ResolutionBudgetExceeded {
            requested: mesh.node_count(),
            budget: budget.max_nodes,
        });
    }
    if let Coefficient::Periodic { epsilon, .. } = spec.coefficient {
        if mesh.h() > epsilon / REFERENCE_CELLS_PER_PERIOD as f64 * (1.0 + 1e-12) {
            return Err(Error::ResolutionMismatch(format!(
                "refined spacing {} does not resolve epsilon = {epsilon} with {REFERENCE_CELLS_PER_PERIOD} cells",
                mesh.h()
            )));
        }
    }
    let fine = fem::solve(&spec.with_mesh(mesh.clone()), opts)?;
    let mut diff = fem::prolongate(&spec.mesh, &coarse.u, refinement);
    for (d, f) in diff.iter_mut().zip(&fine.u) {
        *d -= f;
    }
    let r = refinement as f64;
    let l2 = l2_norm(&mesh, &diff);
    let h1 = (l2 * l2 + h1_seminorm_squared(&mesh, &diff)).sqrt();
    Ok(FineReference {
        coarse,
        fine,
        refinement,
        estimate_l2: l2 * r * r / (r * r - 1.0),
        estimate_h1: h1 * r / (r - 1.0),
        informative: true,
    })
}
