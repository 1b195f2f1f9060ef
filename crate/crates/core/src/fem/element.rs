//! The bilinear rectangle with its 2x2 Gauss rule.
//!
//! Local node `a` sits at corner `(a & 1, a >> 1)`; local degree of freedom
//! `a * 2 + alpha` is displacement component `alpha` at that node. Quadrature
//! point `q` uses the same bit layout.

use crate::cell::GAUSS;
use crate::tensors::ElasticityTensor;

pub type ElementMatrix = [f64; 64];

/// Flattened `a_{ij}^{ab}` at index `((i * 2 + j) * 2 + a) * 2 + b`.
pub type PointTensor = [f64; 16];

pub fn point_tensor(t: &ElasticityTensor) -> PointTensor {
    assert_eq!(t.dim(), 2, "macroscopic problems are two-dimensional");
    let mut out = [0.0; 16];
    out.copy_from_slice(t.entries());
    out
}

/// Reference coordinates of quadrature point `q`.
#[inline]
pub fn gauss_point(q: usize) -> [f64; 2] {
    [GAUSS[q & 1], GAUSS[q >> 1]]
}

/// Shape function values at reference point `(s, t)`.
#[inline]
pub fn shape(s: f64, t: f64) -> [f64; 4] {
    [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t]
}

/// Physical gradients `[a][k]` of the shape functions at `(s, t)`.
#[inline]
pub fn shape_gradients(s: f64, t: f64, hx: f64, hy: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - t) / hx, -(1.0 - s) / hy],
        [(1.0 - t) / hx, -s / hy],
        [-t / hx, (1.0 - s) / hy],
        [t / hx, s / hy],
    ]
}

/// `K[(a, al), (b, be)] = sum_q w_q a_{ij}^{al be}(x_q) d_i N_a d_j N_b`.
pub fn element_stiffness(tensors: &[PointTensor; 4], hx: f64, hy: f64) -> ElementMatrix {
    let w = 0.25 * hx * hy;
    let mut k = [0.0; 64];
    for (q, a_q) in tensors.iter().enumerate() {
        let [s, t] = gauss_point(q);
        let g = shape_gradients(s, t, hx, hy);
        for a in 0..4 {
            for al in 0..2 {
                let row = (a * 2 + al) * 8;
                for b in 0..4 {
                    for be in 0..2 {
                        let mut v = 0.0;
                        for i in 0..2 {
                            for j in 0..2 {
                                v += a_q[((i * 2 + j) * 2 + al) * 2 + be] * g[a][i] * g[b][j];
                            }
                        }
                        k[row + b * 2 + be] += w * v;
                    }
                }
            }
        }
    }
    k
}

/// `y += K x` on one element.
#[inline(always)]
pub fn element_apply(k: &ElementMatrix, x: &[f64; 8], y: &mut [f64; 8]) {
    for r in 0..8 {
        let row = &k[r * 8..r * 8 + 8];
        let mut s = 0.0;
        for c in 0..8 {
            s += row[c] * x[c];
        }
        y[r] += s;
    }
}

/// Interpolation from a coarse element to its child `(dx, dy)`:
/// `P[(b, be), (a, al)] = delta_{al be} N_a(x_b)`.
pub fn child_interpolation(dx: usize, dy: usize) -> ElementMatrix {
    let mut p = [0.0; 64];
    for b in 0..4 {
        let s = 0.5 * (dx + (b & 1)) as f64;
        let t = 0.5 * (dy + (b >> 1)) as f64;
        let n = shape(s, t);
        for a in 0..4 {
            for c in 0..2 {
                p[(b * 2 + c) * 8 + a * 2 + c] = n[a];
            }
        }
    }
    p
}

/// `P^T K P` for 8x8 matrices.
pub fn galerkin_product(k: &ElementMatrix, p: &ElementMatrix) -> ElementMatrix {
    let mut kp = [0.0; 64];
    for r in 0..8 {
        for c in 0..8 {
            kp[r * 8 + c] = (0..8).map(|m| k[r * 8 + m] * p[m * 8 + c]).sum();
        }
    }
    let mut out = [0.0; 64];
    for r in 0..8 {
        for c in 0..8 {
            out[r * 8 + c] = (0..8).map(|m| p[m * 8 + r] * kp[m * 8 + c]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensors::isotropic_tensor;

    #[test]
    fn rigid_modes_are_in_the_kernel() {
        let t = point_tensor(&isotropic_tensor(2.0, 1.0).unwrap());
        let k = element_stiffness(&[t; 4], 0.5, 0.25);
        let coords = [[0.0, 0.0], [0.5, 0.0], [0.0, 0.25], [0.5, 0.25]];
        let modes: [[f64; 8]; 3] = [
            [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            std::array::from_fn(|r| {
                let c = coords[r / 2];
                if r % 2 == 0 {
                    -c[1]
                } else {
                    c[0]
                }
            }),
        ];
        for m in &modes {
            let mut y = [0.0; 8];
            element_apply(&k, m, &mut y);
            assert!(y.iter().all(|v| v.abs() < 1e-13));
        }
    }

    #[test]
    fn galerkin_of_children_matches_coarse_element() {
        let t = point_tensor(&isotropic_tensor(1.0, 3.0).unwrap());
        let fine = element_stiffness(&[t; 4], 0.5, 0.5);
        let mut sum = [0.0; 64];
        for c in 0..4 {
            let g = galerkin_product(&fine, &child_interpolation(c & 1, c >> 1));
            for (s, v) in sum.iter_mut().zip(g) {
                *s += v;
            }
        }
        // constant coefficients: one-point-exact rule, nested spaces
        let coarse = element_stiffness(&[t; 4], 1.0, 1.0);
        for (a, b) in sum.iter().zip(coarse) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
