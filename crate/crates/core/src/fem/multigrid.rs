//! Geometric multigrid V-cycle used as a conjugate-gradient preconditioner.
//!
//! Coarse operators are Galerkin products assembled element by element, the
//! smoother is Chebyshev acceleration of Jacobi, and the coarsest level is
//! solved densely (with a pseudo-inverse when the operator is singular).

use nalgebra::{DMatrix, SymmetricEigen};

use super::operator::ElementOperator;
use crate::error::{Error, Result};
use crate::linalg::{LinearOperator, Preconditioner};
use crate::mesh::Mesh;

const CHEBYSHEV_DEGREE: usize = 3;
const POWER_ITERATIONS: usize = 12;
/// Coarsening stops once a level has at most this many elements.
const COARSEST_ELEMENTS: usize = 64;
/// Largest dense coarse problem.
const MAX_DENSE_DOFS: usize = 4000;

struct Level {
    op: ElementOperator,
    inv_diag: Vec<f64>,
    lambda_max: f64,
}

pub struct Multigrid {
    levels: Vec<Level>,
    coarse_inverse: DMatrix<f64>,
}

impl Multigrid {
    /// Builds the hierarchy below `fine`. Fails when the mesh cannot be
    /// coarsened to a dense-solvable size.
    pub fn new(fine: ElementOperator, mesh: &Mesh) -> Result<Self> {
        let constrained = !fine.fixed().is_empty();
        let mut ops = vec![fine];
        let mut current = mesh.clone();
        loop {
            let last = ops.last().expect("at least one level");
            let (nx, ny) = (last.nx, last.ny);
            if nx % 2 != 0 || ny % 2 != 0 || nx * ny <= COARSEST_ELEMENTS {
                break;
            }
            current = Mesh::from_counts(*current.domain(), current.partition().clone(), nx / 2, ny / 2)?;
            let fixed = if constrained {
                super::operator::dirichlet_mask(&current)
            } else {
                Vec::new()
            };
            let coarse = last.coarsen(fixed);
            ops.push(coarse);
        }
        let coarsest = ops.last().expect("at least one level");
        let n = coarsest.dofs();
        if n > MAX_DENSE_DOFS {
            return Err(Error::InvalidArgument(format!(
                "coarsest multigrid level has {n} unknowns; mesh does not coarsen far enough"
            )));
        }
        let dense = DMatrix::from_row_slice(n, n, &coarsest.to_dense());
        let coarse_inverse = if constrained {
            dense
                .clone()
                .cholesky()
                .map(|c| c.inverse())
                .ok_or_else(|| Error::IllPosed("coarse operator is not positive definite".into()))?
        } else {
            pseudo_inverse(dense)
        };
        let levels = ops
            .into_iter()
            .map(|op| {
                let inv_diag: Vec<f64> = op.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
                let lambda_max = estimate_lambda_max(&op, &inv_diag);
                Level {
                    op,
                    inv_diag,
                    lambda_max,
                }
            })
            .collect();
        Ok(Self {
            levels,
            coarse_inverse,
        })
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    fn cycle(&self, l: usize, b: &[f64], x: &mut [f64]) {
        if l + 1 == self.levels.len() {
            let bv = nalgebra::DVector::from_column_slice(b);
            let sol = &self.coarse_inverse * bv;
            x.copy_from_slice(sol.as_slice());
            return;
        }
        let level = &self.levels[l];
        let n = b.len();
        x.iter_mut().for_each(|v| *v = 0.0);
        chebyshev(level, b, x);
        let mut r = vec![0.0; n];
        level.op.apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let coarse = &self.levels[l + 1].op;
        let mut rc = restrict(&r, level.op.nx, level.op.ny);
        for (v, &f) in rc.iter_mut().zip(coarse.fixed()) {
            if f {
                *v = 0.0;
            }
        }
        let mut xc = vec![0.0; rc.len()];
        self.cycle(l + 1, &rc, &mut xc);
        prolong_add(&xc, x, coarse.nx, coarse.ny);
        for (v, &f) in x.iter_mut().zip(level.op.fixed()) {
            if f {
                *v = 0.0;
            }
        }
        chebyshev(level, b, x);
    }
}

impl Preconditioner for Multigrid {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.cycle(0, r, z);
    }
}

fn pseudo_inverse(m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut inv = DMatrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() > 1e-10 * top {
            let v = eig.eigenvectors.column(k);
            inv += (v * v.transpose()) / lam;
        }
    }
    inv
}

fn estimate_lambda_max(op: &ElementOperator, inv_diag: &[f64]) -> f64 {
    let n = op.dofs();
    let mut x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.618_033_988_75).fract() - 0.5).collect();
    for (v, &f) in x.iter_mut().zip(op.fixed()) {
        if f {
            *v = 0.0;
        }
    }
    let mut y = vec![0.0; n];
    let mut lambda = 1.0;
    for _ in 0..POWER_ITERATIONS {
        let nx = crate::linalg::norm(&x);
        if nx == 0.0 {
            break;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        op.apply(&x, &mut y);
        for (yi, d) in y.iter_mut().zip(inv_diag) {
            *yi *= d;
        }
        lambda = crate::linalg::norm(&y);
        std::mem::swap(&mut x, &mut y);
    }
    lambda
}

/// Chebyshev iteration on `D^{-1} A` over `[0.1, 1.1] * lambda_max`, from
/// the current `x`.
fn chebyshev(level: &Level, b: &[f64], x: &mut [f64]) {
    let n = b.len();
    let upper = 1.1 * level.lambda_max;
    let lower = 0.1 * level.lambda_max;
    let theta = 0.5 * (upper + lower);
    let delta = 0.5 * (upper - lower);
    let sigma = theta / delta;
    let mut rho = 1.0 / sigma;
    let mut r = vec![0.0; n];
    level.op.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut d: Vec<f64> = r.iter().zip(&level.inv_diag).map(|(ri, di)| ri * di / theta).collect();
    let mut ad = vec![0.0; n];
    for step in 0..CHEBYSHEV_DEGREE {
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += di;
        }
        if step + 1 == CHEBYSHEV_DEGREE {
            break;
        }
        level.op.apply(&d, &mut ad);
        for (ri, ai) in r.iter_mut().zip(&ad) {
            *ri -= ai;
        }
        let rho_new = 1.0 / (2.0 * sigma - rho);
        for ((di, ri), inv) in d.iter_mut().zip(&r).zip(&level.inv_diag) {
            *di = rho_new * rho * *di + 2.0 * rho_new / delta * ri * inv;
        }
        rho = rho_new;
    }
}

/// Transpose of bilinear prolongation from `(nx/2, ny/2)` to `(nx, ny)` elements.
fn restrict(fine: &[f64], nx: usize, ny: usize) -> Vec<f64> {
    let (cx, cy) = (nx / 2, ny / 2);
    let mut out = vec![0.0; 2 * (cx + 1) * (cy + 1)];
    for j in 0..=ny {
        let (j0, j1, wj) = split(j);
        for i in 0..=nx {
            let (i0, i1, wi) = split(i);
            let f = 2 * (j * (nx + 1) + i);
            for (jc, wy) in [(j0, wj.0), (j1, wj.1)] {
                if wy == 0.0 {
                    continue;
                }
                for (ic, wx) in [(i0, wi.0), (i1, wi.1)] {
                    if wx == 0.0 {
                        continue;
                    }
                    let c = 2 * (jc * (cx + 1) + ic);
                    let w = wx * wy;
                    out[c] += w * fine[f];
                    out[c + 1] += w * fine[f + 1];
                }
            }
        }
    }
    out
}

/// `fine += P coarse` for coarse mesh of `(cx, cy)` elements.
fn prolong_add(coarse: &[f64], fine: &mut [f64], cx: usize, cy: usize) {
    let (nx, ny) = (2 * cx, 2 * cy);
    for j in 0..=ny {
        let (j0, j1, wj) = split(j);
        for i in 0..=nx {
            let (i0, i1, wi) = split(i);
            let f = 2 * (j * (nx + 1) + i);
            for (jc, wy) in [(j0, wj.0), (j1, wj.1)] {
                if wy == 0.0 {
                    continue;
                }
                for (ic, wx) in [(i0, wi.0), (i1, wi.1)] {
                    if wx == 0.0 {
                        continue;
                    }
                    let c = 2 * (jc * (cx + 1) + ic);
                    let w = wx * wy;
                    fine[f] += w * coarse[c];
                    fine[f + 1] += w * coarse[c + 1];
                }
            }
        }
    }
}

/// Coarse neighbours of fine index `i` with their interpolation weights.
#[inline]
fn split(i: usize) -> (usize, usize, (f64, f64)) {
    if i % 2 == 0 {
        (i / 2, i / 2, (1.0, 0.0))
    } else {
        (i / 2, i / 2 + 1, (0.5, 0.5))
    }
}
