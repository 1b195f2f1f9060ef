//! Flux discrepancy `B = Â - A(I + grad chi)` and its skew potential.
//!
//! Quadrature-point fluxes are moved onto staggered lattices: component `i`
//! of a flux lives at points that sit at element centres along axis `i` and
//! at nodes along every other axis. On these lattices the weak divergence of
//! the multilinear discretization becomes the usual centred difference, so
//! the corrector equation is exactly a discrete divergence-free condition and
//! the potential construction can be carried out without defect.

use rayon::prelude::*;

use super::{CellGrid, CellProblem, CorrectorSet, HomogenizedTensor, GAUSS};
use crate::error::{Error, Result};
use crate::linalg::{accurate_sum, norm, pcg, remove_component_means, CgOptions, IdentityPreconditioner, LinearOperator};
use crate::tensors::CoefficientField;

/// Largest divergence residual for which the potential identity is attempted.
pub const DIVERGENCE_GATE: f64 = 1e-6;

#[inline]
fn quad(d: usize, i: usize, j: usize, al: usize, be: usize) -> usize {
    ((i * d + j) * d + al) * d + be
}

/// Neighbour tables of the periodic lattice: `plus[k][m]` is `m + e_k`.
#[derive(Clone, Debug)]
pub(crate) struct Lattice {
    grid: CellGrid,
    plus: Vec<Vec<u32>>,
    minus: Vec<Vec<u32>>,
}

impl Lattice {
    pub fn new(grid: CellGrid) -> Self {
        let d = grid.dim();
        let count = grid.node_count();
        let table = |off: isize| -> Vec<Vec<u32>> {
            (0..d)
                .map(|k| (0..count).map(|m| grid.shifted(m, k, off) as u32).collect())
                .collect()
        };
        Self {
            grid,
            plus: table(1),
            minus: table(-1),
        }
    }

    /// `(g(m + e_k) - g(m)) / h`
    pub fn forward(&self, g: &[f64], k: usize) -> Vec<f64> {
        let inv_h = self.grid.n() as f64;
        self.plus[k].iter().zip(g).map(|(&p, v)| (g[p as usize] - v) * inv_h).collect()
    }

    /// `(g(m) - g(m - e_k)) / h`
    #[cfg(test)]
    pub fn backward(&self, g: &[f64], k: usize) -> Vec<f64> {
        let inv_h = self.grid.n() as f64;
        self.minus[k].iter().zip(g).map(|(&p, v)| (v - g[p as usize]) * inv_h).collect()
    }

    fn backward_into(&self, g: &[f64], k: usize, out: &mut [f64]) {
        let inv_h = self.grid.n() as f64;
        for ((o, &p), v) in out.iter_mut().zip(&self.minus[k]).zip(g) {
            *o += (v - g[p as usize]) * inv_h;
        }
    }
}

/// Negative periodic lattice Laplacian.
struct NegLaplacian<'a>(&'a Lattice);

impl LinearOperator for NegLaplacian<'_> {
    fn len(&self) -> usize {
        self.0.grid.node_count()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let lat = self.0;
        let d = lat.grid.dim();
        let inv_h2 = (lat.grid.n() * lat.grid.n()) as f64;
        for (m, ym) in y.iter_mut().enumerate() {
            let mut s = 2.0 * d as f64 * x[m];
            for k in 0..d {
                s -= x[lat.plus[k][m] as usize] + x[lat.minus[k][m] as usize];
            }
            *ym = s * inv_h2;
        }
    }
}

/// The discrepancy `b_{ij}^{ab} = â_{ij}^{ab} - a_{ij}^{ab} - a_{ik}^{ag} d_k chi_j^{gb}`.
#[derive(Clone, Debug)]
pub struct FluxDiscrepancy {
    grid: CellGrid,
    /// Quadrature-point values per quadruple, element-major.
    qp: Vec<Vec<f64>>,
    /// Staggered-lattice values per quadruple.
    lattice: Vec<Vec<f64>>,
    /// Largest lattice norm of the probe flux `A`.
    probe_scale: f64,
    divergence_residual: f64,
}

impl FluxDiscrepancy {
    pub fn grid(&self) -> CellGrid {
        self.grid
    }

    /// Values at the quadrature points, `[e * 2^d + q]`.
    pub fn qp_values(&self, i: usize, j: usize, al: usize, be: usize) -> &[f64] {
        &self.qp[quad(self.grid.dim(), i, j, al, be)]
    }

    /// Values on the staggered lattice of axis `i`.
    pub fn lattice_values(&self, i: usize, j: usize, al: usize, be: usize) -> &[f64] {
        &self.lattice[quad(self.grid.dim(), i, j, al, be)]
    }

    /// Largest absolute cell average over all quadruples.
    pub fn max_mean(&self) -> f64 {
        let w = 1.0 / self.qp[0].len() as f64;
        self.qp
            .iter()
            .map(|v| (accurate_sum(v) * w).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `L^2(Q)` norm over all quadruples.
    pub fn max_l2(&self) -> f64 {
        let w = 1.0 / self.qp[0].len() as f64;
        self.qp
            .iter()
            .map(|v| (v.iter().map(|x| x * x).sum::<f64>() * w).sqrt())
            .fold(0.0, f64::max)
    }

    /// `|div b_{.j}^{. b}| / |div a_{.j}^{. b}|`, maximized over `(j, beta)`;
    /// the denominator is the divergence of the probe flux.
    pub fn divergence_residual(&self) -> f64 {
        self.divergence_residual
    }
}

/// Weights moving quadrature values of flux component `i` to its lattice.
struct Transfer {
    /// `targets[i][(e * nq + q) * s + c]` with `s = 2^(d-1)`.
    targets: Vec<Vec<(u32, f64)>>,
}

impl Transfer {
    fn new(grid: CellGrid) -> Self {
        let d = grid.dim();
        let nq = grid.local_count();
        let scale = 1.0 / nq as f64;
        let targets = (0..d)
            .map(|i| {
                let mut out = Vec::with_capacity(grid.element_count() * nq * (nq / 2));
                for e in 0..grid.element_count() {
                    for q in 0..nq {
                        for c in 0..(nq / 2) {
                            let mut node = e;
                            let mut w = scale;
                            let mut bit = 0;
                            for k in (0..d).filter(|&k| k != i) {
                                let t = GAUSS[q >> k & 1];
                                if c >> bit & 1 == 1 {
                                    node = grid.shifted(node, k, 1);
                                    w *= t;
                                } else {
                                    w *= 1.0 - t;
                                }
                                bit += 1;
                            }
                            out.push((node as u32, w));
                        }
                    }
                }
                out
            })
            .collect();
        Self { targets }
    }

    fn apply(&self, grid: CellGrid, i: usize, qp: &[f64]) -> Vec<f64> {
        let per = grid.local_count() / 2;
        let mut out = vec![0.0; grid.node_count()];
        for (k, &v) in qp.iter().enumerate() {
            for &(m, w) in &self.targets[i][k * per..(k + 1) * per] {
                out[m as usize] += w * v;
            }
        }
        out
    }
}

/// Assembles `B` at the quadrature points and on the staggered lattices.
pub fn flux_discrepancy(
    field: &CoefficientField,
    chi: &CorrectorSet,
    a_hat: &HomogenizedTensor,
) -> Result<FluxDiscrepancy> {
    let problem = CellProblem::new(field, chi.grid())?;
    Ok(flux_discrepancy_with(&problem, chi, a_hat))
}

pub(crate) fn flux_discrepancy_with(
    problem: &CellProblem,
    chi: &CorrectorSet,
    a_hat: &HomogenizedTensor,
) -> FluxDiscrepancy {
    let grid = chi.grid();
    let d = grid.dim();
    let nq = grid.local_count();
    let ne = grid.element_count();
    let nquad = d.pow(4);
    let mut qp = vec![vec![0.0; ne * nq]; nquad];
    let mut probe = vec![vec![0.0; ne * nq]; nquad];
    for e in 0..ne {
        for q in 0..nq {
            let t = problem.tensor_at(e, q);
            for i in 0..d {
                for j in 0..d {
                    for al in 0..d {
                        for be in 0..d {
                            let a = t.get(i, j, al, be);
                            let mut flux = a;
                            for k in 0..d {
                                for ga in 0..d {
                                    flux += t.get(i, k, al, ga) * chi.grad_at(j, be, e, q, ga, k);
                                }
                            }
                            let idx = quad(d, i, j, al, be);
                            qp[idx][e * nq + q] = a_hat.a_hat.get(i, j, al, be) - flux;
                            probe[idx][e * nq + q] = a;
                        }
                    }
                }
            }
        }
    }
    let transfer = Transfer::new(grid);
    let to_lattice = |vals: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        (0..nquad)
            .into_par_iter()
            .map(|idx| transfer.apply(grid, idx / d.pow(3), &vals[idx]))
            .collect()
    };
    let lattice = to_lattice(&qp);
    let probe_lattice = to_lattice(&probe);

    let lat = Lattice::new(grid);
    let mut worst: f64 = 0.0;
    for j in 0..d {
        for be in 0..d {
            let mut num = 0.0;
            let mut den = 0.0;
            for al in 0..d {
                let mut div_b = vec![0.0; grid.node_count()];
                let mut div_a = vec![0.0; grid.node_count()];
                for i in 0..d {
                    lat.backward_into(&lattice[quad(d, i, j, al, be)], i, &mut div_b);
                    lat.backward_into(&probe_lattice[quad(d, i, j, al, be)], i, &mut div_a);
                }
                num += div_b.iter().map(|x| x * x).sum::<f64>();
                den += div_a.iter().map(|x| x * x).sum::<f64>();
            }
            let ratio = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
            worst = worst.max(ratio);
        }
    }
    let probe_scale = probe_lattice.iter().map(|v| norm(v)).fold(0.0, f64::max);
    FluxDiscrepancy {
        grid,
        qp,
        lattice,
        probe_scale,
        divergence_residual: worst,
    }
}

/// Skew potentials `phi_{kij}^{ab}` with `d_k phi_{kij}^{ab} = b_{ij}^{ab}`.
#[derive(Clone, Debug)]
pub struct FluxCorrectorSet {
    grid: CellGrid,
    /// Indexed by `k * d^4 + quad(i, j, a, b)`.
    phi: Vec<Vec<f64>>,
    potential_residual: f64,
}

impl FluxCorrectorSet {
    pub fn grid(&self) -> CellGrid {
        self.grid
    }

    /// Lattice values of `phi_{kij}^{ab}`. For `k != i` they sit at element
    /// centres along `k` and `i` and at nodes along the remaining axes.
    pub fn phi(&self, k: usize, i: usize, j: usize, al: usize, be: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.phi[k * d.pow(4) + quad(d, i, j, al, be)]
    }

    /// `|d_k phi_{kij} - b_{ij}|` maximized over quadruples, relative to the
    /// largest `|b_{ij}|`. Quadruples whose discrepancy vanishes identically
    /// would otherwise divide rounding noise by rounding noise.
    pub fn potential_residual(&self) -> f64 {
        self.potential_residual
    }

    pub fn max_abs(&self) -> f64 {
        self.phi.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest `|phi_{kij} + phi_{ikj}|` over all stored values.
    pub fn antisymmetry_defect(&self) -> f64 {
        let d = self.grid.dim();
        let mut worst: f64 = 0.0;
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    for al in 0..d {
                        for be in 0..d {
                            let a = self.phi(k, i, j, al, be);
                            let b = self.phi(i, k, j, al, be);
                            for (x, y) in a.iter().zip(b) {
                                worst = worst.max((x + y).abs());
                            }
                        }
                    }
                }
            }
        }
        worst
    }
}

/// Solves `lap f_{ij} = b_{ij}` on the lattice of axis `i` and sets
/// `phi_{kij} = d_k f_{ij} - d_i f_{kj}`.
pub fn solve_flux_correctors(b: &FluxDiscrepancy, grid: CellGrid, tol: f64) -> Result<FluxCorrectorSet> {
    if grid != b.grid {
        return Err(Error::ResolutionMismatch(format!(
            "flux discrepancy on n = {} but grid has n = {}",
            b.grid.n(),
            grid.n()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if b.divergence_residual > DIVERGENCE_GATE {
        return Err(Error::DivergenceResidualTooLarge {
            residual: b.divergence_residual,
            tol: DIVERGENCE_GATE,
        });
    }
    let d = grid.dim();
    let count = grid.node_count();
    let lat = Lattice::new(grid);
    let op = NegLaplacian(&lat);
    let opts = CgOptions::new(tol, 40 * grid.n() * d + 2000);
    let project = |v: &mut [f64]| remove_component_means(v, 1);

    let potentials: Vec<Vec<f64>> = b
        .lattice
        .par_iter()
        .map(|rhs| {
            let neg: Vec<f64> = rhs.iter().map(|v| -v).collect();
            let mut f = vec![0.0; count];
            pcg(&op, &IdentityPreconditioner, &neg, &mut f, opts, Some(&project))?;
            Ok(f)
        })
        .collect::<Result<_>>()?;

    let nquad = d.pow(4);
    let mut phi = vec![Vec::new(); d * nquad];
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                for al in 0..d {
                    for be in 0..d {
                        let slot = k * nquad + quad(d, i, j, al, be);
                        phi[slot] = if k == i {
                            vec![0.0; count]
                        } else if k < i {
                            let a = lat.forward(&potentials[quad(d, i, j, al, be)], k);
                            let c = lat.forward(&potentials[quad(d, k, j, al, be)], i);
                            a.iter().zip(&c).map(|(x, y)| x - y).collect()
                        } else {
                            Vec::new()
                        };
                    }
                }
            }
        }
    }
    for k in 0..d {
        for i in 0..k {
            for j in 0..d {
                for al in 0..d {
                    for be in 0..d {
                        let src = i * nquad + quad(d, k, j, al, be);
                        let negated = phi[src].iter().map(|v| -v).collect();
                        phi[k * nquad + quad(d, i, j, al, be)] = negated;
                    }
                }
            }
        }
    }

    // A discrepancy at roundoff level (constant coefficients) is measured
    // against the probe flux instead.
    let mut scale = b.lattice.iter().map(|v| norm(v)).fold(0.0, f64::max);
    if scale <= 1e-12 * b.probe_scale {
        scale = b.probe_scale;
    }
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            for al in 0..d {
                for be in 0..d {
                    let target = &b.lattice[quad(d, i, j, al, be)];
                    let mut r: Vec<f64> = target.iter().map(|v| -v).collect();
                    for k in (0..d).filter(|&k| k != i) {
                        lat.backward_into(&phi[k * nquad + quad(d, i, j, al, be)], k, &mut r);
                    }
                    let res = norm(&r);
                    worst = worst.max(if scale > 0.0 { res / scale } else { res });
                }
            }
        }
    }
    Ok(FluxCorrectorSet {
        grid,
        phi,
        potential_residual: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_and_backward_are_adjoint() {
        let grid = CellGrid::new(2, 16).unwrap();
        let lat = Lattice::new(grid);
        let f: Vec<f64> = (0..256).map(|m| (m as f64 * 0.37).sin()).collect();
        let g: Vec<f64> = (0..256).map(|m| (m as f64 * 0.11).cos()).collect();
        for k in 0..2 {
            let lhs: f64 = lat.forward(&f, k).iter().zip(&g).map(|(a, b)| a * b).sum();
            let rhs: f64 = lat.backward(&g, k).iter().zip(&f).map(|(a, b)| a * b).sum();
            assert!((lhs + rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn transfer_preserves_totals() {
        let grid = CellGrid::new(2, 16).unwrap();
        let t = Transfer::new(grid);
        let vals: Vec<f64> = (0..256 * 4).map(|k| (k as f64).sqrt()).collect();
        for i in 0..2 {
            let out = t.apply(grid, i, &vals);
            let a: f64 = out.iter().sum();
            let b: f64 = vals.iter().sum::<f64>() / 4.0;
            assert!((a - b).abs() < 1e-9 * b);
        }
    }
}
