//! Rigid displacements, Neumann compatibility, and the Korn-ratio probe.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::norms::{h1_seminorm_squared, l2_inner, l2_norm, quadrature_points, sym_grad_norm};
use super::MixedProblemSpec;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};
use crate::mesh::{Edge, Mesh};

/// Relative tolerance of the compatibility residuals.
pub const COMPATIBILITY_TOL: f64 = 1e-8;

/// Translations and the rotation about the centroid, as nodal fields.
fn raw_rigid_modes(mesh: &Mesh) -> Vec<Vec<f64>> {
    let c = mesh.domain().centroid();
    let n = mesh.node_count();
    let mut modes = vec![vec![0.0; 2 * n]; 3];
    for node in 0..n {
        let x = mesh.node_coord(node);
        modes[0][2 * node] = 1.0;
        modes[1][2 * node + 1] = 1.0;
        modes[2][2 * node] = -(x[1] - c[1]);
        modes[2][2 * node + 1] = x[0] - c[0];
    }
    modes
}

/// Rigid modes orthonormal in the Euclidean product of nodal vectors.
pub(crate) fn euclidean_rigid_modes(mesh: &Mesh) -> Vec<Vec<f64>> {
    gram_schmidt(raw_rigid_modes(mesh), |a, b| dot(a, b))
}

fn gram_schmidt(mut modes: Vec<Vec<f64>>, inner: impl Fn(&[f64], &[f64]) -> f64) -> Vec<Vec<f64>> {
    for k in 0..modes.len() {
        for _ in 0..2 {
            for m in 0..k {
                let c = inner(&modes[k], &modes[m]);
                let (done, rest) = modes.split_at_mut(k);
                axpy(-c, &done[m], &mut rest[0]);
            }
        }
        let nk = inner(&modes[k], &modes[k]).sqrt();
        modes[k].iter_mut().for_each(|v| *v /= nk);
    }
    modes
}

/// `d(d+1)/2 = 3` rigid displacements, orthonormal in discrete `L^2(Omega)`.
#[derive(Clone, Debug)]
pub struct RigidBodyBasis {
    pub fields: Vec<Vec<f64>>,
}

pub fn rigid_body_basis(mesh: &Mesh) -> RigidBodyBasis {
    RigidBodyBasis {
        fields: gram_schmidt(raw_rigid_modes(mesh), |a, b| l2_inner(mesh, a, b)),
    }
}

impl RigidBodyBasis {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn gram(&self, mesh: &Mesh) -> Vec<Vec<f64>> {
        self.fields
            .iter()
            .map(|a| self.fields.iter().map(|b| l2_inner(mesh, a, b)).collect())
            .collect()
    }

    pub fn inner_products(&self, mesh: &Mesh, u: &[f64]) -> Vec<f64> {
        self.fields.iter().map(|f| l2_inner(mesh, u, f)).collect()
    }

    /// Removes the `L^2` projection onto the rigid displacements.
    pub fn orthogonalize(&self, mesh: &Mesh, u: &mut [f64]) {
        for _ in 0..2 {
            for f in &self.fields {
                let c = l2_inner(mesh, u, f);
                axpy(-c, f, u);
            }
        }
    }

    /// Largest pointwise `|grad phi + grad phi^T|` over the basis.
    pub fn sym_grad_defect(&self, mesh: &Mesh) -> f64 {
        let mut worst: f64 = 0.0;
        for f in &self.fields {
            for e in 0..mesh.element_count() {
                for q in 0..4 {
                    let g = super::element_gradient(mesh, f, e, q);
                    for al in 0..2 {
                        for k in 0..2 {
                            worst = worst.max((g[al][k] + g[k][al]).abs());
                        }
                    }
                }
            }
        }
        worst
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CompatibilityReport {
    /// `int G + int g` per component, then the total moment about the centroid.
    pub residuals: Vec<f64>,
    /// `int |G| + int |g|`, the scale the residuals are judged against.
    pub scale: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Checks that the loads of a traction problem balance, in force and in moment.
pub fn compatibility_check(spec: &MixedProblemSpec) -> CompatibilityReport {
    let mesh = &spec.mesh;
    let c = mesh.domain().centroid();
    let mut res = [0.0; 3];
    let mut scale = 0.0;
    let mut add = |x: [f64; 2], f: [f64; 2], w: f64| {
        res[0] += w * f[0];
        res[1] += w * f[1];
        res[2] += w * ((x[0] - c[0]) * f[1] - (x[1] - c[1]) * f[0]);
        scale += w * (f[0].abs() + f[1].abs());
    };
    let w = 0.25 * mesh.hx() * mesh.hy();
    for e in 0..mesh.element_count() {
        for x in quadrature_points(mesh, e) {
            add(x, (spec.body_force)(x), w);
        }
    }
    let edges: Vec<Edge> = mesh.partition().neumann_edges();
    for edge in edges {
        for (n0, n1) in mesh.edge_segments(edge) {
            let (x0, x1) = (mesh.node_coord(n0), mesh.node_coord(n1));
            let len = ((x1[0] - x0[0]).powi(2) + (x1[1] - x0[1]).powi(2)).sqrt();
            for g in crate::cell::GAUSS {
                let x = [x0[0] + g * (x1[0] - x0[0]), x0[1] + g * (x1[1] - x0[1])];
                add(x, (spec.neumann_data)(x, edge), 0.5 * len);
            }
        }
    }
    let size = mesh.domain().length(0).max(mesh.domain().length(1));
    let pass = res[0].abs() <= COMPATIBILITY_TOL * scale
        && res[1].abs() <= COMPATIBILITY_TOL * scale
        && res[2].abs() <= COMPATIBILITY_TOL * scale * size;
    CompatibilityReport {
        residuals: res.to_vec(),
        scale,
        tol: COMPATIBILITY_TOL,
        pass,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KornProbe {
    pub max_ratio: f64,
    pub trials: usize,
}

/// Largest observed `|u|_{H^1} / |grad u + grad u^T|_{L^2}` over random
/// fields vanishing on the Dirichlet edges. Even trials use nodal noise, odd
/// trials smooth random polynomials.
pub fn korn_probe(mesh: &Mesh, trial_count: usize, seed: u64) -> Result<KornProbe> {
    let dirichlet = mesh.partition().dirichlet_edges().to_vec();
    if dirichlet.is_empty() {
        return Err(Error::IllPosed("Korn probe needs a Dirichlet edge".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dom = *mesh.domain();
    let weight = |x: [f64; 2]| -> f64 {
        dirichlet
            .iter()
            .map(|e| {
                let s = match e {
                    Edge::Left => (x[0] - dom.lower[0]) / dom.length(0),
                    Edge::Right => (dom.upper[0] - x[0]) / dom.length(0),
                    Edge::Bottom => (x[1] - dom.lower[1]) / dom.length(1),
                    Edge::Top => (dom.upper[1] - x[1]) / dom.length(1),
                };
                s.max(0.0)
            })
            .product()
    };
    let n = mesh.node_count();
    let mut worst: f64 = 0.0;
    for trial in 0..trial_count {
        let mut u = vec![0.0; 2 * n];
        if trial % 2 == 0 {
            u.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        } else {
            let coeffs: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for node in 0..n {
                let x = mesh.node_coord(node);
                let xs = [
                    (x[0] - dom.lower[0]) / dom.length(0),
                    (x[1] - dom.lower[1]) / dom.length(1),
                ];
                let w = weight(x);
                for al in 0..2 {
                    let mut v = 0.0;
                    for m in 0..4 {
                        for k in 0..4 {
                            v += coeffs[al * 16 + m * 4 + k] * xs[0].powi(m as i32) * xs[1].powi(k as i32);
                        }
                    }
                    u[2 * node + al] = w * v;
                }
            }
        }
        for node in 0..n {
            if mesh.is_dirichlet_node(node) {
                u[2 * node] = 0.0;
                u[2 * node + 1] = 0.0;
            }
        }
        if norm(&u) == 0.0 {
            continue;
        }
        let h1 = (l2_norm(mesh, &u).powi(2) + h1_seminorm_squared(mesh, &u)).sqrt();
        let sym = sym_grad_norm(mesh, &u);
        if sym > 0.0 {
            worst = worst.max(h1 / sym);
        }
    }
    Ok(KornProbe {
        max_ratio: worst,
        trials: trial_count,
    })
}
