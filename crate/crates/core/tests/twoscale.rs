//! Smoothing, extension, oscillatory term, cutoff and the two-scale report.

use std::f64::consts::PI;

use proptest::prelude::*;
use twoscale_core::cell::{run_cell_pipeline, solve_correctors, CellGrid, DEFAULT_CELL_TOL};
use twoscale_core::fem::manufactured::{body_force, displacement, traction, SmoothField};
use twoscale_core::fem::{self, Coefficient, MixedProblemSpec, SolverOptions};
use twoscale_core::mesh::{BoundaryPartition, DomainSpec, Edge, Mesh};
use twoscale_core::oracles::{laminate_cell_oracle, LaminateProfile};
use twoscale_core::tensors::{isotropic_tensor, CoefficientField, CoefficientKind};
use twoscale_core::twoscale::{
    boundary_layer_ratio, build_cutoff, contraction_ratio, cutoff_profile, extend, mollify, oscillatory_term,
    periodic_weighted_bound_check, smoothing_error_ratio, two_scale_report, CellFunction, GridField, Mollifier,
    SmoothingOperator,
};
use twoscale_core::Error;

fn unit_mesh(n: usize) -> Mesh {
    Mesh::from_counts(
        DomainSpec::unit_square(),
        BoundaryPartition::mixed(&[Edge::Left, Edge::Bottom]).unwrap(),
        n,
        n,
    )
    .unwrap()
}

/// Nodal field on the unit square padded by `pad` nodes on every side.
fn padded(h: f64, pad: usize, comps: usize, f: impl Fn([f64; 2], &mut [f64])) -> GridField {
    let n = (1.0 / h).round() as usize + 1 + 2 * pad;
    let o = -(pad as f64) * h;
    GridField::from_fn([o, o], [h, h], [n, n], comps, f)
}

#[test]
fn mollifier_has_unit_mass_and_compact_even_profile() {
    let m = Mollifier::standard();
    // Independent midpoint rule on the support square.
    let k = 2000;
    let h = 1.0 / k as f64;
    let mut mass = 0.0;
    for j in 0..k {
        for i in 0..k {
            let x = [-0.5 + (i as f64 + 0.5) * h, -0.5 + (j as f64 + 0.5) * h];
            let s = 4.0 * (x[0] * x[0] + x[1] * x[1]);
            if s < 1.0 {
                mass += (-1.0 / (1.0 - s)).exp();
            }
        }
    }
    mass *= h * h;
    assert!((m.normalization() * mass - 1.0).abs() < 1e-9);
    for x in [[0.5, 0.0], [0.0, -0.5], [0.4, 0.4], [1.0, 2.0]] {
        assert_eq!(m.profile(x), 0.0);
    }
    for x in [[0.1, 0.2], [-0.3, 0.05], [0.0, 0.45]] {
        assert_eq!(m.profile(x), m.profile([-x[0], -x[1]]));
        assert!(m.profile(x) > 0.0);
    }
}

#[test]
fn constants_and_affine_fields_are_fixed_points() {
    let mesh = unit_mesh(64);
    let h = mesh.hx();
    let op = SmoothingOperator::standard(1.0 / 8.0, [h, h]).unwrap();
    let pad = op.radius()[0] + 1;
    let c = padded(h, pad, 2, |_, v| v.copy_from_slice(&[1.5, -0.25]));
    for (k, v) in mollify(&op, &c, &mesh).unwrap().iter().enumerate() {
        let exact = if k % 2 == 0 { 1.5 } else { -0.25 };
        assert!((v - exact).abs() < 1e-14);
    }
    let affine = |x: [f64; 2], v: &mut [f64]| {
        v[0] = 0.3 * x[0] - 1.1 * x[1] + 0.2;
        v[1] = -0.7 * x[0] + 0.4 * x[1];
    };
    let a = padded(h, pad, 2, affine);
    let out = mollify(&op, &a, &mesh).unwrap();
    let mut exact = [0.0; 2];
    for node in 0..mesh.node_count() {
        affine(mesh.node_coord(node), &mut exact);
        for c in 0..2 {
            assert!((out[2 * node + c] - exact[c]).abs() < 1e-12);
        }
    }
}

#[test]
fn smoothing_contracts_random_fields() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let h = 1.0 / 64.0;
    let op = SmoothingOperator::standard(1.0 / 8.0, [h, h]).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let values: Vec<f64> = (0..40 * 40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut u = GridField::zeros([0.0, 0.0], [h, h], [40, 40], 1);
        u.values = values;
        worst = worst.max(contraction_ratio(&op, &u).unwrap());
    }
    assert!(worst <= 1.0 + 1e-10, "ratio {worst}");
}

/// Fourier multiplier of `phi_eps` at frequency `2 pi` in `x_1`, that is
/// `int phi(y) cos(2 pi eps y_1) dy`, by a midpoint rule.
fn multiplier(eps: f64) -> f64 {
    let k = 1200;
    let h = 1.0 / k as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..k {
        for i in 0..k {
            let y = [-0.5 + (i as f64 + 0.5) * h, -0.5 + (j as f64 + 0.5) * h];
            let s = 4.0 * (y[0] * y[0] + y[1] * y[1]);
            if s < 1.0 {
                let w = (-1.0 / (1.0 - s)).exp();
                num += w * (2.0 * PI * eps * y[0]).cos();
                den += w;
            }
        }
    }
    num / den
}

#[test]
fn smoothing_error_of_a_sine_matches_its_fourier_multiplier() {
    let mut ratios = Vec::new();
    for eps in [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0] {
        let h = eps / 16.0;
        let op = SmoothingOperator::standard(eps, [h, h]).unwrap();
        // The interior box is then exactly the unit square, one full period in x_1.
        let u = padded(h, op.radius()[0], 1, |x, v| v[0] = (2.0 * PI * x[0]).sin());
        let ratio = smoothing_error_ratio(&op, &u).unwrap();
        // S u = m u, and forward differences of the sine scale it by 2 sin(pi h) / h.
        let oracle = (1.0 - multiplier(eps)).abs() / (eps * 2.0 * (PI * h).sin() / h);
        assert!((ratio - oracle).abs() <= 0.01 * oracle, "eps {eps}: {ratio} vs {oracle}");
        ratios.push(ratio);
    }
    for w in ratios.windows(2) {
        assert!(w[1] <= 1.5 * w[0]);
    }
}

fn smooth_scalar(x: [f64; 2], v: &mut [f64]) {
    v[0] = (PI * x[0]).sin() * (1.0 + x[1] * x[1]) + 0.5 * (2.0 * x[1]).cos();
}

fn checkerboard_gradient() -> CellFunction {
    let field = CoefficientField::checkerboard(2, 1.0, 1.0, 5.0).unwrap();
    let chi = solve_correctors(&field, CellGrid::new(2, 64).unwrap(), DEFAULT_CELL_TOL).unwrap();
    CellFunction::corrector_gradient_magnitude(&chi).unwrap()
}

#[test]
fn weighted_bound_cases() {
    let h = 1.0 / 128.0;
    let op = SmoothingOperator::standard(1.0 / 8.0, [h, h]).unwrap();
    let u = padded(h, op.radius()[0] + 1, 1, smooth_scalar);
    let one = periodic_weighted_bound_check(&op, &CellFunction::from_fn(16, |_| 1.0), &u).unwrap();
    assert!(one <= 1.0 + 1e-10, "{one}");
    let zero = periodic_weighted_bound_check(&op, &CellFunction::from_fn(16, |_| 0.0), &u).unwrap();
    assert_eq!(zero, 0.0);
}

#[test]
fn weighted_bound_with_corrector_gradient_stays_bounded() {
    let f = checkerboard_gradient();
    let mut ratios = Vec::new();
    for eps in [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0] {
        let h = eps / 16.0;
        let op = SmoothingOperator::standard(eps, [h, h]).unwrap();
        let u = padded(h, op.radius()[0] + 1, 1, smooth_scalar);
        ratios.push(periodic_weighted_bound_check(&op, &f, &u).unwrap());
    }
    for w in ratios.windows(2) {
        assert!(w[1] <= 1.5 * w[0], "{ratios:?}");
    }
}

#[test]
fn boundary_layer_ratio_stays_bounded() {
    let f = checkerboard_gradient();
    let one = CellFunction::from_fn(16, |_| 1.0);
    let dom = DomainSpec::unit_square();
    let (mut plain, mut weighted) = (Vec::new(), Vec::new());
    for eps in [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0] {
        let h = eps / 16.0;
        let op = SmoothingOperator::standard(eps, [h, h]).unwrap();
        let pad = op.radius()[0] + 16 + 2;
        let u = padded(h, pad, 1, smooth_scalar);
        plain.push(boundary_layer_ratio(&op, &one, &u, &dom).unwrap());
        weighted.push(boundary_layer_ratio(&op, &f, &u, &dom).unwrap());
    }
    for r in [&plain, &weighted] {
        for w in r.windows(2) {
            assert!(w[1] <= 1.5 * w[0], "{r:?}");
        }
    }
}

#[test]
fn boundary_layer_needs_room_outside_the_domain() {
    let h = 1.0 / 128.0;
    let op = SmoothingOperator::standard(1.0 / 8.0, [h, h]).unwrap();
    let u = padded(h, op.radius()[0] + 1, 1, smooth_scalar);
    let err = boundary_layer_ratio(&op, &CellFunction::from_fn(16, |_| 1.0), &u, &DomainSpec::unit_square());
    assert!(matches!(err, Err(Error::InsufficientPadding { .. })));
}

#[test]
fn extension_of_constants_and_the_tent_map() {
    let mesh = unit_mesh(16);
    let constant: Vec<f64> = (0..mesh.node_count()).flat_map(|_| [2.0, -3.0]).collect();
    let ext = extend(&constant, &mesh, 5).unwrap();
    assert!(ext.field.values.chunks(2).all(|v| v == [2.0, -3.0]));

    let linear: Vec<f64> = (0..mesh.node_count()).flat_map(|k| [mesh.node_coord(k)[0], 0.0]).collect();
    let ext = extend(&linear, &mesh, 5).unwrap();
    let f = &ext.field;
    for j in 0..f.shape[1] {
        for i in 0..f.shape[0] {
            let x = f.point(i, j)[0];
            let tent = if x < 0.0 { -x } else if x > 1.0 { 2.0 - x } else { x };
            assert!((f.get(i, j, 0) - tent).abs() < 1e-14, "x = {x}");
        }
    }
    assert!(ext.stats.c_ext >= 1.0);
}

#[test]
fn extension_restricts_to_the_input() {
    let mesh = unit_mesh(12);
    let u: Vec<f64> = (0..2 * mesh.node_count()).map(|k| ((k * 7919) % 101) as f64 / 17.0).collect();
    let ext = extend(&u, &mesh, 4).unwrap();
    for node in 0..mesh.node_count() {
        let (ix, iy) = mesh.node_ij(node);
        for c in 0..2 {
            assert_eq!(ext.field.get(ix + 4, iy + 4, c).to_bits(), u[2 * node + c].to_bits());
        }
    }
    assert!(matches!(extend(&u, &mesh, 13), Err(Error::InvalidArgument(_))));
}

#[test]
fn oscillatory_term_vanishes_for_trivial_inputs() {
    let mesh = unit_mesh(64);
    let eps = 1.0 / 8.0;
    let constant = CoefficientField::constant(isotropic_tensor(1.0, 1.0).unwrap()).unwrap();
    let zero_chi = run_cell_pipeline(&constant, CellGrid::new(2, 16).unwrap(), 1e-12).unwrap().correctors;
    let grad = vec![[[0.3, -1.0], [2.0, 0.5]]; mesh.node_count()];
    let term = oscillatory_term(&zero_chi, &grad, eps, &mesh).unwrap();
    assert!(term.iter().all(|t| t.abs() < 1e-12));

    let laminate = CoefficientField::laminate_contrast(2, 0, 1.0, 1.0, 5.0).unwrap();
    let chi = solve_correctors(&laminate, CellGrid::new(2, 32).unwrap(), DEFAULT_CELL_TOL).unwrap();
    let zero_grad = vec![[[0.0; 2]; 2]; mesh.node_count()];
    assert!(oscillatory_term(&chi, &zero_grad, eps, &mesh).unwrap().iter().all(|t| *t == 0.0));
}

#[test]
fn oscillatory_term_rejects_coarse_meshes() {
    let laminate = CoefficientField::laminate_contrast(2, 0, 1.0, 1.0, 5.0).unwrap();
    let chi = solve_correctors(&laminate, CellGrid::new(2, 16).unwrap(), DEFAULT_CELL_TOL).unwrap();
    let mesh = unit_mesh(32);
    let grad = vec![[[0.0; 2]; 2]; mesh.node_count()];
    for eps in [1.0 / 8.0, 0.1] {
        assert!(matches!(oscillatory_term(&chi, &grad, eps, &mesh), Err(Error::ResolutionMismatch(_))));
    }
}

/// Zero-mean antiderivative of a two-phase slope profile with phases on
/// `(-1/2, 0]` and `(0, 1/2]`.
fn laminate_chi(s0: f64, s1: f64, y: f64) -> f64 {
    let y = y - (y - 0.5).ceil();
    let raw = if y <= 0.0 { s0 * (y + 0.5) } else { 0.5 * s0 + s1 * y };
    raw - s0 / 4.0
}

#[test]
fn laminate_term_matches_the_closed_form() {
    let field = CoefficientField::laminate_contrast(2, 0, 1.0, 1.0, 5.0).unwrap();
    let profile: LaminateProfile = match field.kind() {
        CoefficientKind::Laminate { profile } => profile.clone(),
        _ => unreachable!(),
    };
    let oracle = laminate_cell_oracle(&profile).unwrap();
    let chi = solve_correctors(&field, CellGrid::new(2, 64).unwrap(), 1e-12).unwrap();
    let g = [[0.7, -0.2], [0.4, 1.1]];
    let mut amplitudes = Vec::new();
    for eps in [1.0 / 4.0, 1.0 / 8.0] {
        let mesh = unit_mesh((16.0 / eps) as usize);
        let grad = vec![g; mesh.node_count()];
        let term = oscillatory_term(&chi, &grad, eps, &mesh).unwrap();
        let mut amp: f64 = 0.0;
        for node in 0..mesh.node_count() {
            let y = mesh.node_coord(node)[0] / eps;
            for ga in 0..2 {
                let mut exact = 0.0;
                for j in 0..2 {
                    for be in 0..2 {
                        let (s0, s1) = (oracle.slope(0, j, be, ga), oracle.slope(1, j, be, ga));
                        exact += laminate_chi(s0, s1, y) * g[be][j];
                    }
                }
                exact *= eps;
                let t = term[2 * node + ga];
                assert!((t - exact).abs() < 1e-9 * eps, "node {node}: {t} vs {exact}");
                amp = amp.max(t.abs());
            }
        }
        amplitudes.push(amp / eps);
    }
    assert!((amplitudes[0] - amplitudes[1]).abs() < 1e-9 * amplitudes[0]);
}

#[test]
fn cutoff_examples() {
    let eps = 1.0 / 8.0;
    let mesh = unit_mesh(64);
    let c = build_cutoff(&mesh, eps, eps, 2.0 * eps).unwrap();
    assert_eq!(c.profile_gradient_bound, 1.0 / eps);
    assert_eq!(cutoff_profile(1.5 * eps, eps, 2.0 * eps), 0.5);
    let dom = mesh.domain();
    for (node, &t) in c.theta.iter().enumerate() {
        let d = dom.boundary_distance(mesh.node_coord(node));
        assert!((0.0..=1.0).contains(&t));
        if d <= eps {
            assert_eq!(t, 1.0);
        }
        if d >= 2.0 * eps {
            assert_eq!(t, 0.0);
        }
        if (d - 1.5 * eps).abs() < 1e-12 {
            assert!((t - 0.5).abs() < 1e-12);
        }
    }
    // Bilinear interpolation of the distance steepens the ramp by at most sqrt 2 near corners.
    assert!(c.observed_gradient <= std::f64::consts::SQRT_2 * c.profile_gradient_bound * (1.0 + 1e-12));
    assert!(c.observed_gradient >= c.profile_gradient_bound * (1.0 - 1e-12));
    assert!((c.gradient_constant - c.observed_gradient * eps).abs() < 1e-15);
    assert!(build_cutoff(&mesh, eps, 2.0 * eps, eps).is_err());
}

fn solve_pair(field: &CoefficientField, a_hat: &twoscale_core::tensors::ElasticityTensor, eps: f64, n: usize) -> (Mesh, Vec<f64>, Vec<f64>) {
    let mesh = unit_mesh(n);
    let data = SmoothField::Trig;
    let spec = MixedProblemSpec::new(
        mesh.clone(),
        Coefficient::Periodic {
            field: field.clone(),
            epsilon: eps,
        },
        body_force(data, a_hat),
        displacement(data),
        traction(data, a_hat),
    );
    let opts = SolverOptions::new(1e-11);
    let ueps = fem::solve(&spec, opts).unwrap().u;
    let u0 = fem::solve(&spec.with_coefficient(Coefficient::Constant(a_hat.clone())), opts).unwrap().u;
    (mesh, ueps, u0)
}

#[test]
fn constant_coefficients_leave_no_remainder() {
    let a = isotropic_tensor(1.0, 1.0).unwrap();
    let field = CoefficientField::constant(a.clone()).unwrap();
    let chi = run_cell_pipeline(&field, CellGrid::new(2, 16).unwrap(), 1e-12).unwrap().correctors;
    let eps = 1.0 / 8.0;
    let (mesh, ueps, u0) = solve_pair(&field, &a, eps, 64);
    let r = two_scale_report(&ueps, &u0, &chi, eps, &mesh, 0.25).unwrap();
    for v in [r.err_l2_u0, r.err_h1_w, r.err_weighted, r.err_interior] {
        assert!(v <= 1e-10, "{r:?}");
    }
    assert!(r.norm_u0_h2 > 0.0);
}

#[test]
fn report_entries_are_consistent() {
    let field = CoefficientField::laminate_contrast(2, 0, 1.0, 1.0, 5.0).unwrap();
    let p = run_cell_pipeline(&field, CellGrid::new(2, 32).unwrap(), DEFAULT_CELL_TOL).unwrap();
    let eps = 1.0 / 8.0;
    let (mesh, ueps, u0) = solve_pair(&field, &p.homogenized.a_hat, eps, 64);
    let r = two_scale_report(&ueps, &u0, &p.correctors, eps, &mesh, 0.25).unwrap();
    for v in [
        r.err_l2_u0,
        r.err_h1_w,
        r.err_weighted,
        r.err_interior,
        r.norm_u0_h2,
        r.layer_h1_w,
        r.bulk_h1_w,
        r.seminorm_w,
        r.interior_seminorm_w,
        r.c_ext,
    ] {
        assert!(v >= 0.0 && v.is_finite());
    }
    assert!(r.err_l2_u0 > 0.0);
    assert!(r.interior_seminorm_w <= r.seminorm_w);
    assert!(r.err_interior <= r.err_h1_w);
    assert!(((r.layer_h1_w.powi(2) + r.bulk_h1_w.powi(2)).sqrt() - r.err_h1_w).abs() <= 1e-12 * r.err_h1_w);
    // delta <= 1/2 on the unit square.
    assert!(r.err_weighted <= 0.5 * r.seminorm_w * (1.0 + 1e-12));
    assert!(matches!(two_scale_report(&ueps, &u0, &p.correctors, eps, &mesh, 0.0), Err(Error::InvalidArgument(_))));
}

proptest! {
    #[test]
    fn stencils_are_nonnegative_partitions_of_unity(k in 8usize..40, eps_exp in 2i32..7) {
        let eps = 2f64.powi(-eps_exp);
        let h = eps / k as f64;
        let op = SmoothingOperator::standard(eps, [h, h]).unwrap();
        for s in [op.node_stencil(), op.half_stencil()] {
            prop_assert!((s.sum() - 1.0).abs() <= 1e-12);
            prop_assert!(s.min_weight() >= 0.0);
        }
        prop_assert!(op.required_margin() >= 0.5 * eps);
    }

    #[test]
    fn cutoff_profile_is_a_clamped_ramp(delta in 0.0f64..1.0, inner in 0.01f64..0.3, width in 0.01f64..0.3) {
        let outer = inner + width;
        let t = cutoff_profile(delta, inner, outer);
        prop_assert!((0.0..=1.0).contains(&t));
        if delta <= inner { prop_assert_eq!(t, 1.0); }
        if delta >= outer { prop_assert_eq!(t, 0.0); }
    }

    #[test]
    fn smoothing_never_amplifies(seed in 0u64..1000, eps_exp in 3i32..5) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let eps = 2f64.powi(-eps_exp);
        let h = eps / 8.0;
        let op = SmoothingOperator::standard(eps, [h, h]).unwrap();
        let mut u = GridField::zeros([0.0, 0.0], [h, h], [24, 24], 2);
        u.values.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        prop_assert!(contraction_ratio(&op, &u).unwrap() <= 1.0 + 1e-10);
    }
}
