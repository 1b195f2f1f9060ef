//! Smooth displacement fields with closed-form derivatives, and the data that
//! makes them exact solutions of a constant-coefficient problem.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{TractionFn, VectorFn};
use crate::tensors::ElasticityTensor;

/// Closed-form smooth fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothField {
    /// A trigonometric-polynomial field without any symmetry.
    Trig,
    /// `(sin(pi x) sin(pi y), 0)`.
    SinSin,
    /// `(a x + b y, c x + d y)` with fixed coefficients.
    Affine,
}

/// Value, gradient `g[alpha][k]`, and Hessian `h[alpha][k][l]`.
pub struct Jet {
    pub value: [f64; 2],
    pub grad: [[f64; 2]; 2],
    pub hess: [[[f64; 2]; 2]; 2],
}

impl SmoothField {
    pub fn jet(self, x: [f64; 2]) -> Jet {
        match self {
            SmoothField::Trig => trig_jet(x),
            SmoothField::SinSin => {
                use std::f64::consts::PI;
                let (sx, cx) = (PI * x[0]).sin_cos();
                let (sy, cy) = (PI * x[1]).sin_cos();
                Jet {
                    value: [sx * sy, 0.0],
                    grad: [[PI * cx * sy, PI * sx * cy], [0.0, 0.0]],
                    hess: [
                        [[-PI * PI * sx * sy, PI * PI * cx * cy], [PI * PI * cx * cy, -PI * PI * sx * sy]],
                        [[0.0; 2]; 2],
                    ],
                }
            }
            SmoothField::Affine => Jet {
                value: [0.3 * x[0] - 0.2 * x[1] + 0.1, 0.15 * x[0] + 0.4 * x[1] - 0.05],
                grad: [[0.3, -0.2], [0.15, 0.4]],
                hess: [[[0.0; 2]; 2]; 2],
            },
        }
    }

    pub fn value(self, x: [f64; 2]) -> [f64; 2] {
        self.jet(x).value
    }
}

fn trig_jet(x: [f64; 2]) -> Jet {
    // U1 = 0.5 sin(a x + p) cos(b y)
    let (a, p, b) = (1.3, 0.4, 0.9);
    let (s1, c1) = (a * x[0] + p).sin_cos();
    let (s2, c2) = (b * x[1]).sin_cos();
    let u1 = 0.5 * s1 * c2;
    let g1 = [0.5 * a * c1 * c2, -0.5 * b * s1 * s2];
    let h1 = [
        [-0.5 * a * a * s1 * c2, -0.5 * a * b * c1 * s2],
        [-0.5 * a * b * c1 * s2, -0.5 * b * b * s1 * c2],
    ];
    // U2 = 0.3 cos(c x) sin(d y + r) + 0.2 x y
    let (c, d, r) = (0.8, 1.1, 0.2);
    let (s3, c3) = (c * x[0]).sin_cos();
    let (s4, c4) = (d * x[1] + r).sin_cos();
    let u2 = 0.3 * c3 * s4 + 0.2 * x[0] * x[1];
    let g2 = [-0.3 * c * s3 * s4 + 0.2 * x[1], 0.3 * d * c3 * c4 + 0.2 * x[0]];
    let h2 = [
        [-0.3 * c * c * c3 * s4, -0.3 * c * d * s3 * c4 + 0.2],
        [-0.3 * c * d * s3 * c4 + 0.2, -0.3 * d * d * c3 * s4],
    ];
    Jet {
        value: [u1, u2],
        grad: [g1, g2],
        hess: [h1, h2],
    }
}

/// Body force `-div(A grad U)` for constant `A`.
pub fn body_force(field: SmoothField, a: &ElasticityTensor) -> VectorFn {
    let a = a.clone();
    Arc::new(move |x| {
        let h = field.jet(x).hess;
        let mut f = [0.0; 2];
        for (al, fa) in f.iter_mut().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    for be in 0..2 {
                        *fa -= a.get(i, j, al, be) * h[be][i][j];
                    }
                }
            }
        }
        f
    })
}

/// Traction `n_i a_{ij}^{ab} d_j U^b` on each edge.
pub fn traction(field: SmoothField, a: &ElasticityTensor) -> TractionFn {
    let a = a.clone();
    Arc::new(move |x, edge| {
        let g = field.jet(x).grad;
        let n = edge.outward_normal();
        let mut t = [0.0; 2];
        for (al, ta) in t.iter_mut().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    for be in 0..2 {
                        *ta += n[i] * a.get(i, j, al, be) * g[be][j];
                    }
                }
            }
        }
        t
    })
}

pub fn displacement(field: SmoothField) -> VectorFn {
    Arc::new(move |x| field.value(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_differences() {
        let step = 1e-5;
        for field in [SmoothField::Trig, SmoothField::SinSin, SmoothField::Affine] {
            for x in [[0.1, 0.2], [0.7, 0.4], [0.33, 0.91]] {
                let jet = field.jet(x);
                for k in 0..2 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[k] += step;
                    xm[k] -= step;
                    let (jp, jm) = (field.jet(xp), field.jet(xm));
                    for al in 0..2 {
                        let fd = (jp.value[al] - jm.value[al]) / (2.0 * step);
                        assert!((fd - jet.grad[al][k]).abs() < 1e-8);
                        for l in 0..2 {
                            let fd = (jp.grad[al][l] - jm.grad[al][l]) / (2.0 * step);
                            assert!((fd - jet.hess[al][l][k]).abs() < 1e-8);
                        }
                    }
                }
            }
        }
    }
}
