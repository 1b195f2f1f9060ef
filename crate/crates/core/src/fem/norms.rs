//! Element-quadrature norms of nodal fields.

use super::element::{gauss_point, shape, shape_gradients};
use crate::mesh::Mesh;

/// `g[alpha][k] = d_k u^alpha`.
pub type Gradient = [[f64; 2]; 2];

pub fn quadrature_points(mesh: &Mesh, e: usize) -> [[f64; 2]; 4] {
    let (ex, ey) = (e % mesh.nx(), e / mesh.nx());
    std::array::from_fn(|q| {
        let [s, t] = gauss_point(q);
        mesh.grid_point(ex as f64 + s, ey as f64 + t)
    })
}

/// Gradient of the bilinear interpolant at quadrature point `q` of element `e`.
pub fn element_gradient(mesh: &Mesh, u: &[f64], e: usize, q: usize) -> Gradient {
    let [s, t] = gauss_point(q);
    let g = shape_gradients(s, t, mesh.hx(), mesh.hy());
    let nodes = mesh.element_nodes(e);
    let mut out = [[0.0; 2]; 2];
    for a in 0..4 {
        for al in 0..2 {
            let v = u[2 * nodes[a] + al];
            out[al][0] += v * g[a][0];
            out[al][1] += v * g[a][1];
        }
    }
    out
}

/// Value of the bilinear interpolant at quadrature point `q` of element `e`.
pub fn element_value(mesh: &Mesh, u: &[f64], e: usize, q: usize) -> [f64; 2] {
    let [s, t] = gauss_point(q);
    let n = shape(s, t);
    let nodes = mesh.element_nodes(e);
    let mut out = [0.0; 2];
    for a in 0..4 {
        out[0] += n[a] * u[2 * nodes[a]];
        out[1] += n[a] * u[2 * nodes[a] + 1];
    }
    out
}

/// Exact `L^2` inner product of two bilinear interpolants.
pub fn l2_inner(mesh: &Mesh, u: &[f64], v: &[f64]) -> f64 {
    let w = 0.25 * mesh.hx() * mesh.hy();
    let mut acc = 0.0;
    for e in 0..mesh.element_count() {
        for q in 0..4 {
            let a = element_value(mesh, u, e, q);
            let b = element_value(mesh, v, e, q);
            acc += w * (a[0] * b[0] + a[1] * b[1]);
        }
    }
    acc
}

pub fn l2_norm(mesh: &Mesh, u: &[f64]) -> f64 {
    l2_inner(mesh, u, u).sqrt()
}

pub fn h1_seminorm_squared(mesh: &Mesh, u: &[f64]) -> f64 {
    let w = 0.25 * mesh.hx() * mesh.hy();
    let mut acc = 0.0;
    for e in 0..mesh.element_count() {
        for q in 0..4 {
            let g = element_gradient(mesh, u, e, q);
            acc += w * g.iter().flatten().map(|v| v * v).sum::<f64>();
        }
    }
    acc
}

/// `|grad u + grad u^T|_{L^2}`.
pub fn sym_grad_norm(mesh: &Mesh, u: &[f64]) -> f64 {
    let w = 0.25 * mesh.hx() * mesh.hy();
    let mut acc = 0.0;
    for e in 0..mesh.element_count() {
        for q in 0..4 {
            let g = element_gradient(mesh, u, e, q);
            for al in 0..2 {
                for k in 0..2 {
                    let s = g[al][k] + g[k][al];
                    acc += w * s * s;
                }
            }
        }
    }
    acc.sqrt()
}
