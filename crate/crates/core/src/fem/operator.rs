//! Matrix-free stiffness operator with periodic element-type tables.

use std::collections::HashMap;

use super::element::{
    child_interpolation, element_apply, element_stiffness, gauss_point, point_tensor, ElementMatrix, PointTensor,
};
use super::Coefficient;
use crate::error::{Error, Result};
use crate::linalg::LinearOperator;
use crate::mesh::Mesh;

/// Stiffness of a uniform mesh whose element matrices repeat with period
/// `(px, py)` in element indices. Rows and columns of `fixed` degrees of
/// freedom are replaced by the identity.
#[derive(Clone, Debug)]
pub struct ElementOperator {
    pub(crate) nx: usize,
    pub(crate) ny: usize,
    px: usize,
    py: usize,
    table: Vec<u32>,
    mats: Vec<ElementMatrix>,
    fixed: Vec<bool>,
}

fn period_of(epsilon: f64, h: f64) -> Result<usize> {
    let ratio = epsilon / h;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio {
        return Err(Error::ResolutionMismatch(format!(
            "epsilon / h = {ratio} is not an integer"
        )));
    }
    Ok(k as usize)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl ElementOperator {
    pub fn new(mesh: &Mesh, coefficient: &Coefficient, constrain_dirichlet: bool) -> Result<Self> {
        let (hx, hy) = (mesh.hx(), mesh.hy());
        let (px, py) = match coefficient {
            Coefficient::Constant(_) => (1, 1),
            Coefficient::Periodic { epsilon, .. } => (
                period_of(*epsilon, hx)?.min(mesh.nx()),
                period_of(*epsilon, hy)?.min(mesh.ny()),
            ),
        };
        let mut lookup: HashMap<Vec<u64>, u32> = HashMap::new();
        let mut mats = Vec::new();
        let mut table = Vec::with_capacity(px * py);
        for ey in 0..py {
            for ex in 0..px {
                let tensors: [PointTensor; 4] = std::array::from_fn(|q| {
                    let [s, t] = gauss_point(q);
                    let x = mesh.grid_point(ex as f64 + s, ey as f64 + t);
                    point_tensor(&coefficient.tensor_at(x))
                });
                let key: Vec<u64> = tensors.iter().flatten().map(|v| v.to_bits()).collect();
                let id = *lookup.entry(key).or_insert_with(|| {
                    mats.push(element_stiffness(&tensors, hx, hy));
                    (mats.len() - 1) as u32
                });
                table.push(id);
            }
        }
        let fixed = if constrain_dirichlet {
            dirichlet_mask(mesh)
        } else {
            Vec::new()
        };
        Ok(Self {
            nx: mesh.nx(),
            ny: mesh.ny(),
            px,
            py,
            table,
            mats,
            fixed,
        })
    }

    pub fn distinct_elements(&self) -> usize {
        self.mats.len()
    }

    #[inline]
    pub fn element_matrix(&self, ex: usize, ey: usize) -> &ElementMatrix {
        &self.mats[self.table[(ey % self.py) * self.px + ex % self.px] as usize]
    }

    pub fn fixed(&self) -> &[bool] {
        &self.fixed
    }

    pub fn dofs(&self) -> usize {
        2 * (self.nx + 1) * (self.ny + 1)
    }

    /// `y = K x` without constraints.
    pub fn apply_unconstrained(&self, x: &[f64], y: &mut [f64]) {
        let nx = self.nx;
        y.iter_mut().for_each(|v| *v = 0.0);
        for ey in 0..self.ny {
            let row = (ey % self.py) * self.px;
            let mut cx = 0;
            for ex in 0..nx {
                let k = &self.mats[self.table[row + cx] as usize];
                cx += 1;
                if cx == self.px {
                    cx = 0;
                }
                let n0 = ey * (nx + 1) + ex;
                let n2 = n0 + nx + 1;
                let xl = [
                    x[2 * n0],
                    x[2 * n0 + 1],
                    x[2 * n0 + 2],
                    x[2 * n0 + 3],
                    x[2 * n2],
                    x[2 * n2 + 1],
                    x[2 * n2 + 2],
                    x[2 * n2 + 3],
                ];
                let mut yl = [0.0; 8];
                element_apply(k, &xl, &mut yl);
                y[2 * n0] += yl[0];
                y[2 * n0 + 1] += yl[1];
                y[2 * n0 + 2] += yl[2];
                y[2 * n0 + 3] += yl[3];
                y[2 * n2] += yl[4];
                y[2 * n2 + 1] += yl[5];
                y[2 * n2 + 2] += yl[6];
                y[2 * n2 + 3] += yl[7];
            }
        }
    }

    /// Diagonal of the constrained operator.
    pub fn diagonal(&self) -> Vec<f64> {
        let nx = self.nx;
        let mut d = vec![0.0; self.dofs()];
        for ey in 0..self.ny {
            for ex in 0..nx {
                let k = self.element_matrix(ex, ey);
                let n0 = ey * (nx + 1) + ex;
                let nodes = [n0, n0 + 1, n0 + nx + 1, n0 + nx + 2];
                for (a, &n) in nodes.iter().enumerate() {
                    for c in 0..2 {
                        let r = a * 2 + c;
                        d[2 * n + c] += k[r * 8 + r];
                    }
                }
            }
        }
        for (v, &f) in d.iter_mut().zip(&self.fixed) {
            if f {
                *v = 1.0;
            }
        }
        d
    }

    /// Galerkin coarsening onto the mesh with every other grid line removed.
    pub fn coarsen(&self, coarse_fixed: Vec<bool>) -> Self {
        debug_assert!(self.nx % 2 == 0 && self.ny % 2 == 0);
        let px = self.px / gcd(self.px, 2);
        let py = self.py / gcd(self.py, 2);
        let interp: [ElementMatrix; 4] = std::array::from_fn(|c| child_interpolation(c & 1, c >> 1));
        let mut lookup: HashMap<[u32; 4], u32> = HashMap::new();
        let mut mats = Vec::new();
        let mut table = Vec::with_capacity(px * py);
        for ey in 0..py {
            for ex in 0..px {
                let children: [u32; 4] = std::array::from_fn(|c| {
                    let (fx, fy) = (2 * ex + (c & 1), 2 * ey + (c >> 1));
                    self.table[(fy % self.py) * self.px + fx % self.px]
                });
                let id = *lookup.entry(children).or_insert_with(|| {
                    let mut sum = [0.0; 64];
                    for (c, &ty) in children.iter().enumerate() {
                        let g = super::element::galerkin_product(&self.mats[ty as usize], &interp[c]);
                        for (s, v) in sum.iter_mut().zip(g) {
                            *s += v;
                        }
                    }
                    mats.push(sum);
                    (mats.len() - 1) as u32
                });
                table.push(id);
            }
        }
        Self {
            nx: self.nx / 2,
            ny: self.ny / 2,
            px,
            py,
            table,
            mats,
            fixed: coarse_fixed,
        }
    }

    /// Dense copy of the constrained operator, for small meshes.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dofs();
        let mut out = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for c in 0..n {
            e[c] = 1.0;
            self.apply(&e, &mut col);
            for r in 0..n {
                out[r * n + c] = col[r];
            }
            e[c] = 0.0;
        }
        out
    }
}

impl LinearOperator for ElementOperator {
    fn len(&self) -> usize {
        self.dofs()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        if self.fixed.is_empty() {
            self.apply_unconstrained(x, y);
            return;
        }
        let masked: Vec<f64> = x
            .iter()
            .zip(&self.fixed)
            .map(|(&v, &f)| if f { 0.0 } else { v })
            .collect();
        self.apply_unconstrained(&masked, y);
        for ((yi, &xi), &f) in y.iter_mut().zip(x).zip(&self.fixed) {
            if f {
                *yi = xi;
            }
        }
    }
}

/// `true` for both components of every Dirichlet node.
pub fn dirichlet_mask(mesh: &Mesh) -> Vec<bool> {
    (0..2 * mesh.node_count())
        .map(|dof| mesh.is_dirichlet_node(dof / 2))
        .collect()
}
