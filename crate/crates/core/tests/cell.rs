//! Cell problems against closed-form laminate oracles and the identity suite.

use nalgebra::{Matrix3, Vector3};
use twoscale_core::cell::{
    homogenized_tensor, run_cell_pipeline, solve_correctors, verify_cell_identities, CellGrid, DEFAULT_CELL_TOL,
};
use twoscale_core::oracles::{harmonic_mean, laminate_cell_oracle, LaminateProfile};
use twoscale_core::tensors::{isotropic_tensor, tensor_bounds, CoefficientField, ElasticityTensor};

fn scalar(a: f64) -> ElasticityTensor {
    ElasticityTensor::from_fn(1, |_, _, _, _| a)
}

fn scalar_laminate(a: f64, b: f64) -> LaminateProfile {
    LaminateProfile::new(1, 0, vec![-0.5, 0.0], vec![scalar(a), scalar(b)]).unwrap()
}

#[test]
fn harmonic_mean_of_one_and_five() {
    let expected = 2.0 / (1.0 + 1.0 / 5.0);
    assert!((harmonic_mean(&[1.0, 5.0], &[0.5, 0.5]) - expected).abs() < 1e-15);
    let oracle = laminate_cell_oracle(&scalar_laminate(1.0, 5.0)).unwrap();
    assert!((oracle.homogenized.get(0, 0, 0, 0) - 5.0 / 3.0).abs() < 1e-14);
}

#[test]
fn scalar_laminate_solver_matches_the_cell_ode() {
    let profile = scalar_laminate(1.0, 5.0);
    let field = CoefficientField::laminate(profile.clone()).unwrap();
    let grid = CellGrid::new(1, 256).unwrap();
    let chi = solve_correctors(&field, grid, DEFAULT_CELL_TOL).unwrap();
    let a_hat = homogenized_tensor(&field, &chi).unwrap().a_hat.get(0, 0, 0, 0);
    assert!((a_hat - 5.0 / 3.0).abs() / (5.0 / 3.0) < 5e-3, "A_hat = {a_hat}");

    // (a (chi' + 1))' = 0 with zero-mean chi' gives chi' = c / a - 1, c the harmonic mean.
    let c = 5.0 / 3.0;
    let coeff = [1.0, 5.0];
    let mut worst: f64 = 0.0;
    for e in 0..grid.element_count() {
        for q in 0..grid.local_count() {
            let y = grid.quadrature_point(e, q)[0];
            let exact = c / coeff[profile.phase_at(y)] - 1.0;
            worst = worst.max((chi.grad_at(0, 0, e, q, 0, 0) - exact).abs());
        }
    }
    assert!(worst < 0.01 * (2.0 / 3.0), "slope error {worst}");
}

#[test]
fn single_phase_and_degenerate_laminates() {
    let a = isotropic_tensor(1.0, 2.0).unwrap();
    let single = laminate_cell_oracle(&LaminateProfile::new(2, 1, vec![-0.5], vec![a.clone()]).unwrap()).unwrap();
    assert!(single.homogenized.max_abs_diff(&a) < 1e-14);
    assert!(single.slopes.iter().flatten().flatten().all(|s| s.abs() < 1e-14));

    let double =
        laminate_cell_oracle(&LaminateProfile::new(2, 1, vec![-0.2, 0.3], vec![a.clone(), a.clone()]).unwrap()).unwrap();
    assert!(double.homogenized.max_abs_diff(&single.homogenized) < 1e-14);
    assert!(double.slopes.iter().flatten().flatten().all(|s| s.abs() < 1e-14));
}

/// Closed-form effective moduli of an equal-volume isotropic laminate along `y_1`.
fn layered_entries(phases: &[(f64, f64)]) -> [(usize, usize, usize, usize, f64); 4] {
    let mean = |f: &dyn Fn(f64, f64) -> f64| phases.iter().map(|&(l, m)| f(l, m)).sum::<f64>() / phases.len() as f64;
    let inv_m = mean(&|l, m| 1.0 / (l + 2.0 * m));
    let inv_mu = mean(&|_, m| 1.0 / m);
    let ratio = mean(&|l, m| l / (l + 2.0 * m));
    let plate = mean(&|l, m| l + 2.0 * m - l * l / (l + 2.0 * m));
    [
        (0, 0, 0, 0, 1.0 / inv_m),
        (0, 0, 1, 1, 1.0 / inv_mu),
        (0, 1, 0, 1, ratio / inv_m),
        (1, 1, 1, 1, plate + ratio * ratio / inv_m),
    ]
}

#[test]
fn elastic_laminate_oracle_matches_closed_form() {
    let field = CoefficientField::laminate_contrast(2, 0, 1.0, 1.0, 5.0).unwrap();
    let profile = match field.kind() {
        twoscale_core::tensors::CoefficientKind::Laminate { profile } => profile.clone(),
        _ => unreachable!(),
    };
    let oracle = laminate_cell_oracle(&profile).unwrap();
    for (i, j, a, b, v) in layered_entries(&[(1.0, 1.0), (5.0, 5.0)]) {
        assert!((oracle.homogenized.get(i, j, a, b) - v).abs() < 1e-12, "entry ({i}{j}{a}{b})");
    }
}

#[test]
fn elastic_laminate_solver_at_n64() {
    let field = CoefficientField::laminate_contrast(2, 0, 1.0, 1.0, 5.0).unwrap();
    let chi = solve_correctors(&field, CellGrid::new(2, 64).unwrap(), DEFAULT_CELL_TOL).unwrap();
    let a_hat = homogenized_tensor(&field, &chi).unwrap().a_hat;
    let scale = a_hat.max_abs();
    for (i, j, a, b, v) in layered_entries(&[(1.0, 1.0), (5.0, 5.0)]) {
        assert!((a_hat.get(i, j, a, b) - v).abs() < 0.02 * scale, "entry ({i}{j}{a}{b})");
    }
}

#[test]
fn constant_pipeline_is_trivial() {
    let a = isotropic_tensor(2.0, 0.5).unwrap();
    let p = run_cell_pipeline(&CoefficientField::constant(a.clone()).unwrap(), CellGrid::new(2, 32).unwrap(), 1e-12)
        .unwrap();
    assert!(p.correctors.max_abs() < 1e-10);
    assert!(p.homogenized.a_hat.max_abs_diff(&a) < 1e-12);
    assert!(p.discrepancy.max_l2() < 1e-12);
    assert!(p.flux_correctors.max_abs() < 1e-12);
    for r in &p.report.residuals {
        assert!(r.value < 1e-10, "{} = {:e}", r.name, r.value);
    }
}

#[test]
fn laminate_fields_depend_on_the_lamination_coordinate_only() {
    let field = CoefficientField::laminate_contrast(2, 0, 1.0, 1.0, 5.0).unwrap();
    let grid = CellGrid::new(2, 32).unwrap();
    let n = grid.n();
    let p = run_cell_pipeline(&field, grid, DEFAULT_CELL_TOL).unwrap();
    let transverse_spread = |v: &[f64]| -> f64 {
        let mut worst: f64 = 0.0;
        for r in 1..v.len() / n {
            for c in 0..n {
                worst = worst.max((v[r * n + c] - v[c]).abs());
            }
        }
        worst
    };
    let scale = p.discrepancy.max_l2();
    let idx = [0, 1];
    for i in idx {
        for j in idx {
            for a in idx {
                for b in idx {
                    let spread = transverse_spread(p.discrepancy.lattice_values(i, j, a, b));
                    assert!(spread < 1e-10 * scale, "b_{i}{j}^{a}{b} varies by {spread:e}");
                    for k in idx {
                        let spread = transverse_spread(p.flux_correctors.phi(k, i, j, a, b));
                        assert!(spread < 1e-8 * scale, "phi_{k}{i}{j}^{a}{b} varies by {spread:e}");
                    }
                }
            }
        }
    }
}

#[test]
fn laminate_identities_do_not_degrade_under_refinement() {
    let field = CoefficientField::laminate_contrast(2, 0, 1.0, 1.0, 5.0).unwrap();
    let coarse = run_cell_pipeline(&field, CellGrid::new(2, 32).unwrap(), 1e-12).unwrap();
    let fine = run_cell_pipeline(&field, CellGrid::new(2, 64).unwrap(), 1e-12).unwrap();
    assert!(coarse.report.all_pass() && fine.report.all_pass());
    // Interfaces sit on grid lines, so the residuals reach rounding level at once.
    let floor = 1e-11;
    for (c, f) in coarse.report.residuals.iter().zip(&fine.report.residuals) {
        assert!(f.value <= c.value.max(floor), "{}: {:e} -> {:e}", c.name, c.value, f.value);
    }
}

#[test]
fn correctors_of_another_field_are_flagged() {
    let grid = CellGrid::new(2, 32).unwrap();
    let board = CoefficientField::checkerboard(2, 1.0, 1.0, 5.0).unwrap();
    let laminate = CoefficientField::laminate_contrast(2, 0, 1.0, 1.0, 5.0).unwrap();
    let p = run_cell_pipeline(&laminate, grid, DEFAULT_CELL_TOL).unwrap();
    let report =
        verify_cell_identities(&board, &p.correctors, &p.homogenized, &p.discrepancy, &p.flux_correctors).unwrap();
    assert!(!report.get("corrector_equation").unwrap().pass);
}

/// Mandel form of an isotropic tensor acting on `(e11, e22, sqrt2 e12)`.
fn mandel(t: &ElasticityTensor) -> Matrix3<f64> {
    let idx = [(0, 0, 1.0), (1, 1, 1.0), (0, 1, std::f64::consts::SQRT_2)];
    Matrix3::from_fn(|r, c| {
        let (i, a, sr) = idx[r];
        let (j, b, sc) = idx[c];
        t.get(i, j, a, b) * sr * sc
    })
}

#[test]
fn checkerboard_is_bracketed_by_voigt_and_reuss() {
    let field = CoefficientField::checkerboard(2, 1.0, 1.0, 5.0).unwrap();
    let p = run_cell_pipeline(&field, CellGrid::new(2, 64).unwrap(), DEFAULT_CELL_TOL).unwrap();
    let a_hat = &p.homogenized.a_hat;
    assert!(p.homogenized.symmetry_residual < 1e-8);

    let soft = isotropic_tensor(1.0, 1.0).unwrap();
    let stiff = isotropic_tensor(5.0, 5.0).unwrap();
    let (k_soft, _) = tensor_bounds(&soft);
    let (k_stiff, _) = tensor_bounds(&stiff);
    let (k_hat, _) = tensor_bounds(a_hat);
    assert!(k_soft < k_hat && k_hat < k_stiff, "{k_soft} < {k_hat} < {k_stiff}");

    let (ms, mh) = (mandel(&soft), mandel(&stiff));
    let voigt = (ms + mh) * 0.5;
    let reuss = ((ms.try_inverse().unwrap() + mh.try_inverse().unwrap()) * 0.5).try_inverse().unwrap();
    let m = mandel(a_hat);
    for e in [
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
        Vector3::new(1.0, -1.0, 0.0),
        Vector3::new(0.3, 0.7, -0.5),
    ] {
        let q = |mat: &Matrix3<f64>| (e.transpose() * mat * e)[0];
        assert!(q(&reuss) <= q(&m) * (1.0 + 1e-9), "Reuss {} > {}", q(&reuss), q(&m));
        assert!(q(&m) <= q(&voigt) * (1.0 + 1e-9), "{} > Voigt {}", q(&m), q(&voigt));
    }
}
