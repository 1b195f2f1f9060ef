//! Consistency report for one cell pipeline.

use serde::Serialize;

use super::flux::flux_discrepancy_with;
use super::{
    homogenized_tensor_with, solve_correctors_with, solve_flux_correctors, CellGrid, CellProblem,
    CorrectorSet, FluxCorrectorSet, FluxDiscrepancy, HomogenizedTensor, SYMMETRY_TOL,
};
use crate::error::Result;
use crate::tensors::{symmetry_residual, CoefficientField};

pub const CORRECTOR_TOL: f64 = 1e-9;
pub const MEAN_TOL: f64 = 1e-10;
pub const DIVERGENCE_TOL: f64 = 1e-6;
pub const POTENTIAL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityResidual {
    pub name: &'static str,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl IdentityResidual {
    fn new(name: &'static str, value: f64, tol: f64) -> Self {
        Self {
            name,
            value,
            tol,
            pass: value.is_finite() && value <= tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub residuals: Vec<IdentityResidual>,
}

impl IdentityReport {
    pub fn all_pass(&self) -> bool {
        self.residuals.iter().all(|r| r.pass)
    }

    pub fn get(&self, name: &str) -> Option<&IdentityResidual> {
        self.residuals.iter().find(|r| r.name == name)
    }

    pub fn value(&self, name: &str) -> f64 {
        self.get(name).map(|r| r.value).unwrap_or(f64::NAN)
    }
}

/// Evaluates the six cell identities. The corrector residual is recomputed
/// from `field`, so correctors belonging to another field are caught.
pub fn verify_cell_identities(
    field: &CoefficientField,
    chi: &CorrectorSet,
    a_hat: &HomogenizedTensor,
    b: &FluxDiscrepancy,
    phi: &FluxCorrectorSet,
) -> Result<IdentityReport> {
    let problem = CellProblem::new(field, chi.grid())?;
    Ok(report_with(&problem, chi, a_hat, b, phi))
}

fn report_with(
    problem: &CellProblem,
    chi: &CorrectorSet,
    a_hat: &HomogenizedTensor,
    b: &FluxDiscrepancy,
    phi: &FluxCorrectorSet,
) -> IdentityReport {
    let d = chi.grid().dim();
    let mut corrector: f64 = 0.0;
    for j in 0..d {
        for be in 0..d {
            corrector = corrector.max(problem.corrector_residual(chi.chi(j, be), j, be));
        }
    }
    IdentityReport {
        residuals: vec![
            IdentityResidual::new("corrector_equation", corrector, CORRECTOR_TOL),
            IdentityResidual::new("corrector_mean", chi.max_mean(), MEAN_TOL),
            IdentityResidual::new("a_hat_symmetry", symmetry_residual(&a_hat.a_hat), SYMMETRY_TOL),
            IdentityResidual::new("b_mean", b.max_mean(), MEAN_TOL),
            IdentityResidual::new("b_divergence", b.divergence_residual(), DIVERGENCE_TOL),
            IdentityResidual::new("phi_potential", phi.potential_residual(), POTENTIAL_TOL),
        ],
    }
}

/// Every product of the cell stage for one coefficient field.
#[derive(Clone, Debug)]
pub struct CellPipeline {
    pub problem: CellProblem,
    pub correctors: CorrectorSet,
    pub homogenized: HomogenizedTensor,
    pub discrepancy: FluxDiscrepancy,
    pub flux_correctors: FluxCorrectorSet,
    pub report: IdentityReport,
}

/// Runs correctors, `Â`, `B`, and `Phi` on one grid and checks the identities.
pub fn run_cell_pipeline(field: &CoefficientField, grid: CellGrid, tol: f64) -> Result<CellPipeline> {
    let problem = CellProblem::new(field, grid)?;
    let correctors = solve_correctors_with(&problem, tol)?;
    let homogenized = homogenized_tensor_with(&problem, &correctors)?;
    let discrepancy = flux_discrepancy_with(&problem, &correctors, &homogenized);
    let flux_correctors = solve_flux_correctors(&discrepancy, grid, tol)?;
    let report = report_with(&problem, &correctors, &homogenized, &discrepancy, &flux_correctors);
    Ok(CellPipeline {
        problem,
        correctors,
        homogenized,
        discrepancy,
        flux_correctors,
        report,
    })
}
