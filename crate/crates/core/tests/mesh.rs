//! Mesh counting, tags, distances and boundary layers.

use proptest::prelude::*;
use twoscale_core::mesh::{
    build_mesh, distance_field, layer_elements, BoundaryPartition, DomainSpec, Edge, Mesh, NodeTag,
};
use twoscale_core::Error;

fn left_bottom() -> BoundaryPartition {
    BoundaryPartition::mixed(&[Edge::Left, Edge::Bottom]).unwrap()
}

#[test]
fn counting() {
    let m = build_mesh(DomainSpec::unit_square(), left_bottom(), 0.25).unwrap();
    assert_eq!((m.node_count(), m.element_count()), (25, 16));

    let wide = DomainSpec::new([0.0, 0.0], [2.0, 1.0]).unwrap();
    let m = build_mesh(wide, left_bottom(), 0.5).unwrap();
    assert_eq!((m.node_count(), m.element_count()), (15, 8));
}

#[test]
fn nonconforming_size_is_rejected() {
    let err = build_mesh(DomainSpec::unit_square(), left_bottom(), 0.3).unwrap_err();
    assert!(matches!(err, Error::NonconformingMeshSize { .. }), "{err}");
}

#[test]
fn degenerate_domains_are_rejected() {
    assert!(DomainSpec::new([0.0, 0.0], [0.0, 1.0]).is_err());
    assert!(DomainSpec::new([1.0, 0.0], [0.0, 1.0]).is_err());
}

#[test]
fn distances_at_known_nodes() {
    let m = build_mesh(DomainSpec::unit_square(), left_bottom(), 0.25).unwrap();
    let d = distance_field(&m);
    assert_eq!(d.delta[m.node_index(2, 2)], 0.5);
    assert_eq!(d.delta[m.node_index(1, 2)], 0.25);
    for node in 0..m.node_count() {
        let (ix, iy) = m.node_ij(node);
        if ix == 0 || iy == 0 || ix == 4 || iy == 4 {
            assert_eq!(d.delta[node], 0.0);
        }
    }
}

#[test]
fn wide_layer_holds_every_element() {
    let m = build_mesh(DomainSpec::unit_square(), left_bottom(), 1.0 / 8.0).unwrap();
    assert_eq!(layer_elements(&m, 0.5 * 2f64.sqrt() / 2.0 + 0.1).len(), m.element_count());
}

#[test]
fn two_ring_layer_matches_brute_force() {
    let m = build_mesh(DomainSpec::unit_square(), left_bottom(), 1.0 / 16.0).unwrap();
    let layer = layer_elements(&m, 2.0 / 16.0);
    let expected: Vec<usize> = (0..16)
        .flat_map(|ey| (0..16).map(move |ex| (ex, ey)))
        .filter(|&(ex, ey)| ex.min(ey).min(15 - ex).min(15 - ey) < 2)
        .map(|(ex, ey)| ey * 16 + ex)
        .collect();
    assert_eq!(layer, expected);
    assert_eq!(layer.len(), 256 - 144);
}

#[test]
fn outer_ring_centroids_sit_half_a_cell_inside() {
    let h = 0.25;
    let m = build_mesh(DomainSpec::unit_square(), left_bottom(), h).unwrap();
    assert!(layer_elements(&m, 0.4 * h).is_empty());
    let ring = layer_elements(&m, 0.5 * h + 1e-12);
    assert_eq!(ring.len(), 12);
    for e in 0..m.element_count() {
        let (ex, ey) = (e % 4, e / 4);
        let outer = ex == 0 || ey == 0 || ex == 3 || ey == 3;
        assert_eq!(ring.contains(&e), outer);
    }
}

#[test]
fn layer_measure_is_bounded_by_the_perimeter() {
    let m = build_mesh(DomainSpec::unit_square(), left_bottom(), 1.0 / 32.0).unwrap();
    let dom = *m.domain();
    for width in [1.0, 3.0, 6.0, 10.0].map(|k| k / 32.0) {
        let area = layer_elements(&m, width).len() as f64 * m.hx() * m.hy();
        assert!(area <= (dom.perimeter() + 4.0 * width) * width, "width {width}: area {area}");
    }
}

#[test]
fn dirichlet_corners_and_neumann_edges() {
    let m = build_mesh(DomainSpec::unit_square(), left_bottom(), 0.25).unwrap();
    assert_eq!(m.tag(m.node_index(0, 0)), NodeTag::Dirichlet);
    assert_eq!(m.tag(m.node_index(4, 0)), NodeTag::Dirichlet);
    assert_eq!(m.tag(m.node_index(0, 4)), NodeTag::Dirichlet);
    assert_eq!(m.tag(m.node_index(4, 4)), NodeTag::Neumann);
    assert_eq!(m.tag(m.node_index(4, 2)), NodeTag::Neumann);
    assert_eq!(m.tag(m.node_index(2, 2)), NodeTag::Interior);
}

#[test]
fn pure_traction_has_no_dirichlet_nodes() {
    let m = Mesh::from_counts(DomainSpec::unit_square(), BoundaryPartition::pure_neumann(), 4, 4).unwrap();
    assert!((0..m.node_count()).all(|n| !m.is_dirichlet_node(n)));
}

proptest! {
    #[test]
    fn distance_is_nonnegative_and_one_lipschitz(nx in 1usize..12, ny in 1usize..12, w in 0.5f64..3.0, hgt in 0.5f64..3.0) {
        let dom = DomainSpec::new([0.0, 0.0], [w, hgt]).unwrap();
        let m = Mesh::from_counts(dom, left_bottom(), nx, ny).unwrap();
        let d = distance_field(&m);
        for node in 0..m.node_count() {
            prop_assert!(d.delta[node] >= 0.0);
            let (ix, iy) = m.node_ij(node);
            let x = m.node_coord(node);
            for (jx, jy) in [(ix + 1, iy), (ix, iy + 1)] {
                if jx <= nx && jy <= ny {
                    let other = m.node_index(jx, jy);
                    let y = m.node_coord(other);
                    let dist = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
                    prop_assert!((d.delta[node] - d.delta[other]).abs() <= dist * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn every_boundary_node_has_one_boundary_tag(nx in 1usize..10, ny in 1usize..10, mask in 1u8..16) {
        let edges: Vec<Edge> = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top]
            .into_iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, e)| e)
            .collect();
        let partition = BoundaryPartition::mixed(&edges).unwrap();
        let m = Mesh::from_counts(DomainSpec::unit_square(), partition.clone(), nx, ny).unwrap();
        for node in 0..m.node_count() {
            let (ix, iy) = m.node_ij(node);
            let on = [ix == 0, ix == nx, iy == 0, iy == ny];
            let tag = m.tag(node);
            if on.iter().any(|&b| b) {
                prop_assert_ne!(tag, NodeTag::Interior);
                let on_dirichlet = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top]
                    .iter()
                    .zip(on)
                    .any(|(e, b)| b && partition.is_dirichlet(*e));
                prop_assert_eq!(tag == NodeTag::Dirichlet, on_dirichlet);
            } else {
                prop_assert_eq!(tag, NodeTag::Interior);
            }
        }
    }
}
