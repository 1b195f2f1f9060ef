//! Refined reference solves and their Richardson estimates.

use twoscale_core::fem::manufactured::{body_force, displacement, traction, SmoothField};
use twoscale_core::fem::{Coefficient, MixedProblemSpec};
use twoscale_core::mesh::{BoundaryPartition, DomainSpec, Edge, Mesh};
use twoscale_core::oracles::{fine_reference, ReferenceBudget};
use twoscale_core::tensors::{isotropic_tensor, CoefficientField};
use twoscale_core::Error;

fn partition() -> BoundaryPartition {
    BoundaryPartition::mixed(&[Edge::Left, Edge::Bottom]).unwrap()
}

fn smooth_problem(n: usize) -> MixedProblemSpec {
    let a = isotropic_tensor(1.0, 1.0).unwrap();
    let field = SmoothField::SinSin;
    MixedProblemSpec::new(
        Mesh::from_counts(DomainSpec::unit_square(), partition(), n, n).unwrap(),
        Coefficient::Constant(a.clone()),
        body_force(field, &a),
        displacement(field),
        traction(field, &a),
    )
}

fn periodic_problem(n: usize, epsilon: f64) -> MixedProblemSpec {
    let a = isotropic_tensor(1.0, 1.0).unwrap();
    let field = SmoothField::Trig;
    MixedProblemSpec::new(
        Mesh::from_counts(DomainSpec::unit_square(), partition(), n, n).unwrap(),
        Coefficient::Periodic {
            field: CoefficientField::laminate_contrast(2, 0, 1.0, 1.0, 5.0).unwrap(),
            epsilon,
        },
        body_force(field, &a),
        displacement(field),
        traction(field, &a),
    )
}

#[test]
fn unit_refinement_is_uninformative() {
    let r = fine_reference(&smooth_problem(8), 1, ReferenceBudget::default()).unwrap();
    assert!(!r.informative);
    assert_eq!(r.coarse.u, r.fine.u);
    assert_eq!((r.estimate_l2, r.estimate_h1), (0.0, 0.0));
}

#[test]
fn unsupported_refinement_is_rejected() {
    let err = fine_reference(&smooth_problem(4), 3, ReferenceBudget::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");
}

#[test]
fn budget_is_enforced() {
    let err = fine_reference(&smooth_problem(8), 2, ReferenceBudget { max_nodes: 100 }).unwrap_err();
    assert!(
        matches!(err, Error::ResolutionBudgetExceeded { requested: 289, budget: 100 }),
        "{err}"
    );
}

#[test]
fn estimates_shrink_at_second_order() {
    let estimates: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| fine_reference(&smooth_problem(n), 2, ReferenceBudget::default()).unwrap().estimate_l2)
        .collect();
    for w in estimates.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.6..=2.2).contains(&order), "order {order} from {estimates:?}");
    }
}

#[test]
fn l2_estimate_tracks_the_true_error() {
    let spec = smooth_problem(16);
    let r = fine_reference(&spec, 2, ReferenceBudget::default()).unwrap();
    let mesh = &spec.mesh;
    let diff: Vec<f64> = (0..mesh.node_count())
        .flat_map(|k| SmoothField::SinSin.value(mesh.node_coord(k)))
        .zip(&r.coarse.u)
        .map(|(e, u)| u - e)
        .collect();
    let truth = twoscale_core::fem::l2_norm(mesh, &diff);
    let q = r.estimate_l2 / truth;
    assert!((0.5..=2.0).contains(&q), "estimate {} vs error {truth}", r.estimate_l2);
}

#[test]
fn unresolved_periods_are_refused() {
    let err = fine_reference(&periodic_problem(16, 0.125), 2, ReferenceBudget::default()).unwrap_err();
    assert!(matches!(err, Error::ResolutionMismatch(_)), "{err}");
    let ok = fine_reference(&periodic_problem(64, 0.125), 2, ReferenceBudget::default()).unwrap();
    assert!(ok.informative && ok.estimate_l2 > 0.0);
}
