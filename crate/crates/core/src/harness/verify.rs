//! The oracle-agreement suite behind the `verify` subcommand.

use serde::Serialize;

use crate::cell::{run_cell_pipeline, CellGrid};
use crate::error::Result;
use crate::fem::manufactured::{body_force, displacement, traction, SmoothField};
use crate::fem::{self, l2_norm, Coefficient, MixedProblemSpec};
use crate::mesh::{BoundaryPartition, DomainSpec, Edge, Mesh};
use crate::oracles::{fine_reference, laminate_cell_oracle, LaminateProfile, ReferenceBudget};
use crate::tensors::{isotropic_tensor, CoefficientField, CoefficientKind};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Accepted closed interval.
    pub accept: [f64; 2],
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            accept: [lo, hi],
            pass: value >= lo && value <= hi,
        }
    }

    fn at_most(name: impl Into<String>, value: f64, hi: f64) -> Self {
        Self::new(name, value, 0.0, hi)
    }
}

/// `max |A_hat - oracle| / max |oracle|` for the two-phase laminate.
pub fn laminate_disagreement(contrast: f64, n: usize) -> Result<f64> {
    let field = CoefficientField::laminate_contrast(2, 0, 1.0, 1.0, contrast)?;
    let profile: &LaminateProfile = match field.kind() {
        CoefficientKind::Laminate { profile } => profile,
        _ => unreachable!("laminate_contrast builds a laminate"),
    };
    let oracle = laminate_cell_oracle(profile)?;
    let grid = CellGrid::new(2, n)?;
    let chi = crate::cell::solve_correctors(&field, grid, crate::cell::DEFAULT_CELL_TOL)?;
    let a_hat = crate::cell::homogenized_tensor(&field, &chi)?.a_hat;
    Ok(a_hat.max_abs_diff(&oracle.homogenized) / oracle.homogenized.max_abs())
}

/// `L^2` errors of the manufactured constant-coefficient problem on `n x n`
/// meshes, for each `n`.
pub fn manufactured_errors(field: SmoothField, sizes: &[usize]) -> Result<Vec<f64>> {
    let a = isotropic_tensor(1.0, 1.0)?;
    let partition = BoundaryPartition::mixed(&[Edge::Left, Edge::Bottom])?;
    sizes
        .iter()
        .map(|&n| {
            let mesh = Mesh::from_counts(DomainSpec::unit_square(), partition.clone(), n, n)?;
            let spec = MixedProblemSpec::new(
                mesh.clone(),
                Coefficient::Constant(a.clone()),
                body_force(field, &a),
                displacement(field),
                traction(field, &a),
            );
            let sol = fem::solve_mixed(&spec, 1e-12)?;
            let exact: Vec<f64> = (0..mesh.node_count()).flat_map(|k| field.value(mesh.node_coord(k))).collect();
            let diff: Vec<f64> = sol.u.iter().zip(&exact).map(|(a, b)| a - b).collect();
            Ok(l2_norm(&mesh, &diff))
        })
        .collect()
}

/// Runs the suite. `quick` uses coarser cell grids.
pub fn run_verification(quick: bool) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let a = isotropic_tensor(1.0, 1.0)?;
    let n = if quick { 32 } else { 64 };
    let constant = run_cell_pipeline(&CoefficientField::constant(a.clone())?, CellGrid::new(2, n)?, 1e-12)?;
    checks.push(Check::at_most(
        "constant: corrector residual",
        constant.report.value("corrector_equation"),
        1e-10,
    ));
    checks.push(Check::at_most(
        "constant: |A_hat - A|",
        constant.homogenized.a_hat.max_abs_diff(&a),
        1e-12,
    ));
    checks.push(Check::at_most("constant: |B|", constant.discrepancy.max_l2(), 1e-12));
    checks.push(Check::at_most("constant: |Phi|", constant.flux_correctors.max_abs(), 1e-12));

    checks.push(Check::at_most("laminate n=64: relative deviation", laminate_disagreement(5.0, 64)?, 0.02));
    if !quick {
        checks.push(Check::at_most("laminate n=256: relative deviation", laminate_disagreement(5.0, 256)?, 0.005));
    }

    let n = if quick { 64 } else { 256 };
    let board = run_cell_pipeline(&CoefficientField::checkerboard(2, 1.0, 1.0, 5.0)?, CellGrid::new(2, n)?, 1e-10)?;
    for r in &board.report.residuals {
        checks.push(Check::at_most(format!("checkerboard n={n}: {}", r.name), r.value, r.tol));
    }
    checks.push(Check::at_most(
        format!("checkerboard n={n}: phi antisymmetry"),
        board.flux_correctors.antisymmetry_defect(),
        0.0,
    ));

    let errs = manufactured_errors(SmoothField::Trig, &[8, 16, 32])?;
    let order = (errs[1] / errs[2]).log2();
    checks.push(Check::new("fem: manufactured L2 order", order, 1.8, 2.2));
    let affine = manufactured_errors(SmoothField::Affine, &[4])?[0];
    checks.push(Check::at_most("fem: affine field reproduced", affine, 1e-9));

    let mesh = Mesh::from_counts(DomainSpec::unit_square(), BoundaryPartition::mixed(&[Edge::Left, Edge::Bottom])?, 8, 8)?;
    let spec = MixedProblemSpec::new(
        mesh,
        Coefficient::Constant(a.clone()),
        body_force(SmoothField::Trig, &a),
        displacement(SmoothField::Trig),
        traction(SmoothField::Trig, &a),
    );
    let coarse = fine_reference(&spec, 2, ReferenceBudget::default())?;
    let finer = fine_reference(&spec.with_mesh(spec.mesh.refined(2)?), 2, ReferenceBudget::default())?;
    let ratio = (coarse.estimate_l2 / finer.estimate_l2).log2();
    checks.push(Check::new("richardson: estimated L2 order", ratio, 1.6, 2.2));
    Ok(checks)
}
