//! Periodic cell problems on the unit torus `Q = [-1/2, 1/2]^d`.
//!
//! Correctors are conforming multilinear finite element fields on a uniform
//! periodic grid, integrated with the tensor two-point Gauss rule. Their
//! gradients are kept at the quadrature points, which is where the
//! homogenized tensor and the flux discrepancy are evaluated.

mod flux;
mod identities;

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{accurate_sum, pcg, CompensatedSum, remove_component_means, CgOptions, CgStats, Jacobi, LinearOperator};
use crate::tensors::{
    symmetry_residual, tensor_bounds, CoefficientField, ElasticityTensor, EllipticityBounds,
};

pub use flux::{
    flux_discrepancy, solve_flux_correctors, FluxCorrectorSet, FluxDiscrepancy, DIVERGENCE_GATE,
};
pub use identities::{
    run_cell_pipeline, verify_cell_identities, CellPipeline, IdentityReport, IdentityResidual,
};

/// Default relative tolerance of every cell solve.
pub const DEFAULT_CELL_TOL: f64 = 1e-10;

/// Largest admissible symmetry defect of the homogenized tensor.
pub const SYMMETRY_TOL: f64 = 1e-8;

pub(crate) const GAUSS: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// Uniform periodic grid with `n` nodes (and elements) per side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CellGrid {
    d: usize,
    n: usize,
}

impl CellGrid {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d == 0 || d > 3 {
            return Err(Error::InvalidArgument(format!("cell dimension {d} not supported")));
        }
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "cell grid needs a power of two >= 16 nodes per side, got {n}"
            )));
        }
        Ok(Self { d, n })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `1 / n`, exact for power-of-two `n`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn element_count(&self) -> usize {
        self.node_count()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut m = vec![0; self.d];
        for c in m.iter_mut() {
            *c = flat % self.n;
            flat /= self.n;
        }
        m
    }

    pub fn flat_index(&self, m: &[usize]) -> usize {
        m.iter().rev().fold(0, |acc, &c| acc * self.n + c % self.n)
    }

    /// Coordinates of a node.
    pub fn node_position(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .map(|c| -0.5 + c as f64 * self.spacing())
            .collect()
    }

    /// Flat index of the node reached from `flat` by `offset` steps along `axis`.
    pub fn shifted(&self, flat: usize, axis: usize, offset: isize) -> usize {
        let stride = self.n.pow(axis as u32);
        let c = (flat / stride) % self.n;
        let c_new = (c as isize + offset).rem_euclid(self.n as isize) as usize;
        flat - c * stride + c_new * stride
    }

    /// Number of local nodes (and quadrature points) per element.
    pub fn local_count(&self) -> usize {
        1 << self.d
    }

    /// Node of element `e` at local corner `a` (bit `k` of `a` is the offset along axis `k`).
    pub fn element_node(&self, e: usize, a: usize) -> usize {
        let mut node = e;
        for k in 0..self.d {
            if a >> k & 1 == 1 {
                node = self.shifted(node, k, 1);
            }
        }
        node
    }

    /// Cell coordinates of quadrature point `q` of element `e`.
    pub fn quadrature_point(&self, e: usize, q: usize) -> Vec<f64> {
        let h = self.spacing();
        self.multi_index(e)
            .into_iter()
            .enumerate()
            .map(|(k, c)| -0.5 + (c as f64 + GAUSS[q >> k & 1]) * h)
            .collect()
    }
}

/// Shape function tables of the multilinear reference element.
#[derive(Clone, Debug)]
pub(crate) struct ReferenceElement {
    pub d: usize,
    pub nloc: usize,
    /// `grad[(q * nloc + a) * d + k]`, already divided by the spacing
    pub grad: Vec<f64>,
    /// Quadrature weight of every point.
    pub weight: f64,
}

impl ReferenceElement {
    pub fn new(d: usize, h: f64) -> Self {
        let nloc = 1 << d;
        let mut grad = vec![0.0; nloc * nloc * d];
        for q in 0..nloc {
            let t: Vec<f64> = (0..d).map(|k| GAUSS[q >> k & 1]).collect();
            for a in 0..nloc {
                let factor = |k: usize| if a >> k & 1 == 1 { t[k] } else { 1.0 - t[k] };
                for k in 0..d {
                    let sign = if a >> k & 1 == 1 { 1.0 } else { -1.0 };
                    let rest: f64 = (0..d).filter(|&m| m != k).map(factor).product();
                    grad[(q * nloc + a) * d + k] = sign * rest / h;
                }
            }
        }
        Self {
            d,
            nloc,
            grad,
            weight: h.powi(d as i32) / nloc as f64,
        }
    }

    #[inline]
    pub fn dn(&self, q: usize, a: usize, k: usize) -> f64 {
        self.grad[(q * self.nloc + a) * self.d + k]
    }
}

/// Element matrices of one distinct coefficient pattern.
#[derive(Clone, Debug)]
struct ElementType {
    /// One tensor per quadrature point.
    tensors: Vec<ElasticityTensor>,
    /// Dense stiffness with local dof `a * d + alpha`.
    stiffness: Vec<f64>,
}

/// Discretized cell operator `-div(A grad)` for one coefficient field.
#[derive(Clone, Debug)]
pub struct CellProblem {
    grid: CellGrid,
    reference: ReferenceElement,
    types: Vec<ElementType>,
    element_type: Vec<u32>,
    element_nodes: Vec<u32>,
    diag: Vec<f64>,
}

impl CellProblem {
    pub fn new(field: &CoefficientField, grid: CellGrid) -> Result<Self> {
        if field.dim() != grid.dim() {
            return Err(Error::InvalidArgument(format!(
                "field dimension {} does not match grid dimension {}",
                field.dim(),
                grid.dim()
            )));
        }
        let d = grid.dim();
        let reference = ReferenceElement::new(d, grid.spacing());
        let nloc = reference.nloc;
        let ne = grid.element_count();
        let ndof_e = nloc * d;

        let mut lookup: HashMap<Vec<u64>, u32> = HashMap::new();
        let mut types: Vec<ElementType> = Vec::new();
        let mut element_type = Vec::with_capacity(ne);
        let mut element_nodes = Vec::with_capacity(ne * nloc);
        for e in 0..ne {
            let tensors: Vec<ElasticityTensor> =
                (0..nloc).map(|q| field.evaluate(&grid.quadrature_point(e, q))).collect();
            let key: Vec<u64> = tensors.iter().flat_map(|t| t.entries().iter().map(|v| v.to_bits())).collect();
            let id = *lookup.entry(key).or_insert_with(|| {
                types.push(ElementType {
                    stiffness: element_stiffness(&reference, &tensors),
                    tensors,
                });
                (types.len() - 1) as u32
            });
            element_type.push(id);
            for a in 0..nloc {
                element_nodes.push(grid.element_node(e, a) as u32);
            }
        }

        let mut diag = vec![0.0; grid.node_count() * d];
        for e in 0..ne {
            let ke = &types[element_type[e] as usize].stiffness;
            for a in 0..nloc {
                let node = element_nodes[e * nloc + a] as usize;
                for al in 0..d {
                    let r = a * d + al;
                    diag[node * d + al] += ke[r * ndof_e + r];
                }
            }
        }
        Ok(Self {
            grid,
            reference,
            types,
            element_type,
            element_nodes,
            diag,
        })
    }

    pub fn grid(&self) -> CellGrid {
        self.grid
    }

    /// Number of distinct element matrices.
    pub fn distinct_elements(&self) -> usize {
        self.types.len()
    }

    fn nodes_of(&self, e: usize) -> &[u32] {
        let nloc = self.reference.nloc;
        &self.element_nodes[e * nloc..(e + 1) * nloc]
    }

    pub(crate) fn tensor_at(&self, e: usize, q: usize) -> &ElasticityTensor {
        &self.types[self.element_type[e] as usize].tensors[q]
    }

    /// Load of the probe `P_j^beta = y_j e^beta`: `-int a_{ij}^{alpha beta} d_i v^alpha`.
    pub fn corrector_rhs(&self, j: usize, be: usize) -> Vec<f64> {
        self.assemble_probe(j, be, false)
    }

    /// `assemble_probe` with `absolute` set adds `|local|` instead of the
    /// element contributions, so nothing cancels.
    fn assemble_probe(&self, j: usize, be: usize, absolute: bool) -> Vec<f64> {
        let d = self.grid.dim();
        let r = &self.reference;
        let mut cache: HashMap<u32, Vec<f64>> = HashMap::new();
        let mut rhs = vec![0.0; self.grid.node_count() * d];
        for e in 0..self.grid.element_count() {
            let ty = self.element_type[e];
            let local = cache.entry(ty).or_insert_with(|| {
                let tensors = &self.types[ty as usize].tensors;
                let mut loc = vec![0.0; r.nloc * d];
                for (q, t) in tensors.iter().enumerate() {
                    for a in 0..r.nloc {
                        for al in 0..d {
                            let s: f64 = (0..d).map(|i| t.get(i, j, al, be) * r.dn(q, a, i)).sum();
                            loc[a * d + al] -= r.weight * s;
                        }
                    }
                }
                loc
            });
            for (a, &node) in self.nodes_of(e).iter().enumerate() {
                for al in 0..d {
                    let v = local[a * d + al];
                    rhs[node as usize * d + al] += if absolute { v.abs() } else { v };
                }
            }
        }
        rhs
    }

    /// Quadrature-point gradients of a nodal vector field:
    /// `out[((e * nq + q) * d + gamma) * d + k] = d_k u^gamma`.
    pub fn qp_gradients(&self, u: &[f64]) -> Vec<f64> {
        let d = self.grid.dim();
        let r = &self.reference;
        let nq = r.nloc;
        let mut out = vec![0.0; self.grid.element_count() * nq * d * d];
        for e in 0..self.grid.element_count() {
            let nodes = self.nodes_of(e);
            for q in 0..nq {
                let base = (e * nq + q) * d * d;
                for (a, &node) in nodes.iter().enumerate() {
                    for ga in 0..d {
                        let val = u[node as usize * d + ga];
                        for k in 0..d {
                            out[base + ga * d + k] += val * r.dn(q, a, k);
                        }
                    }
                }
            }
        }
        out
    }

    /// Relative residual of the corrector equation for `chi_j^beta`.
    pub fn corrector_residual(&self, chi: &[f64], j: usize, be: usize) -> f64 {
        let rhs = self.corrector_rhs(j, be);
        let mut r = vec![0.0; rhs.len()];
        self.apply(chi, &mut r);
        for (ri, bi) in r.iter_mut().zip(&rhs) {
            *ri -= bi;
        }
        // When the probe load cancels to roundoff (constant coefficients),
        // measure against the uncancelled element loads instead.
        let magnitude = crate::linalg::norm(&self.assemble_probe(j, be, true));
        let mut scale = crate::linalg::norm(&rhs);
        if scale <= 1e-12 * magnitude {
            scale = magnitude;
        }
        let res = crate::linalg::norm(&r);
        if scale > 0.0 {
            res / scale
        } else {
            res
        }
    }

    pub fn solve_corrector(&self, j: usize, be: usize, tol: f64) -> Result<(Vec<f64>, CgStats)> {
        let d = self.grid.dim();
        let rhs = self.corrector_rhs(j, be);
        let mut x = vec![0.0; rhs.len()];
        let pre = Jacobi::new(&self.diag);
        let project = |v: &mut [f64]| remove_component_means(v, d);
        let opts = CgOptions::new(tol, 20 * self.grid.n() * d + 2000);
        let stats = pcg(self, &pre, &rhs, &mut x, opts, Some(&project))?;
        remove_component_means(&mut x, d);
        Ok((x, stats))
    }
}

impl LinearOperator for CellProblem {
    fn len(&self) -> usize {
        self.grid.node_count() * self.grid.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let d = self.grid.dim();
        let nloc = self.reference.nloc;
        let ndof_e = nloc * d;
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut xl = vec![0.0; ndof_e];
        for e in 0..self.grid.element_count() {
            let nodes = self.nodes_of(e);
            for (a, &node) in nodes.iter().enumerate() {
                for al in 0..d {
                    xl[a * d + al] = x[node as usize * d + al];
                }
            }
            let ke = &self.types[self.element_type[e] as usize].stiffness;
            for (a, &node) in nodes.iter().enumerate() {
                for al in 0..d {
                    let row = &ke[(a * d + al) * ndof_e..(a * d + al + 1) * ndof_e];
                    y[node as usize * d + al] += row.iter().zip(&xl).map(|(k, v)| k * v).sum::<f64>();
                }
            }
        }
    }
}

fn element_stiffness(r: &ReferenceElement, tensors: &[ElasticityTensor]) -> Vec<f64> {
    let d = r.d;
    let ndof_e = r.nloc * d;
    let mut ke = vec![0.0; ndof_e * ndof_e];
    for (q, t) in tensors.iter().enumerate() {
        for a in 0..r.nloc {
            for al in 0..d {
                for b in 0..r.nloc {
                    for be in 0..d {
                        let mut s = 0.0;
                        for i in 0..d {
                            for j in 0..d {
                                s += t.get(i, j, al, be) * r.dn(q, a, i) * r.dn(q, b, j);
                            }
                        }
                        ke[(a * d + al) * ndof_e + b * d + be] += r.weight * s;
                    }
                }
            }
        }
    }
    ke
}

/// The `d^2` correctors `chi_j^beta` with their quadrature-point gradients.
#[derive(Clone, Debug)]
pub struct CorrectorSet {
    grid: CellGrid,
    /// `chi[j * d + beta]`: nodal vector field, component `gamma` at `node * d + gamma`.
    chi: Vec<Vec<f64>>,
    /// `grad[j * d + beta]`: layout of [`CellProblem::qp_gradients`].
    grad: Vec<Vec<f64>>,
    stats: Vec<CgStats>,
}

impl CorrectorSet {
    pub fn grid(&self) -> CellGrid {
        self.grid
    }

    pub fn chi(&self, j: usize, be: usize) -> &[f64] {
        &self.chi[j * self.grid.dim() + be]
    }

    pub fn grad(&self, j: usize, be: usize) -> &[f64] {
        &self.grad[j * self.grid.dim() + be]
    }

    /// `d_k chi_j^{gamma beta}` at quadrature point `q` of element `e`.
    #[inline]
    pub fn grad_at(&self, j: usize, be: usize, e: usize, q: usize, ga: usize, k: usize) -> f64 {
        let d = self.grid.dim();
        let nq = self.grid.local_count();
        self.grad[j * d + be][((e * nq + q) * d + ga) * d + k]
    }

    pub fn stats(&self) -> &[CgStats] {
        &self.stats
    }

    /// Largest absolute cell average over all components of all correctors.
    pub fn max_mean(&self) -> f64 {
        let d = self.grid.dim();
        let count = self.grid.node_count() as f64;
        self.chi
            .iter()
            .flat_map(|c| {
                (0..d).map(move |g| {
                    let comp: Vec<f64> = c.iter().skip(g).step_by(d).copied().collect();
                    accurate_sum(&comp).abs() / count
                })
            })
            .fold(0.0, f64::max)
    }

    /// Largest nodal magnitude of any corrector component.
    pub fn max_abs(&self) -> f64 {
        self.chi.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Periodic multilinear interpolation of `chi_j^{gamma beta}` at cell point `y`.
    pub fn interpolate(&self, j: usize, be: usize, ga: usize, y: &[f64]) -> f64 {
        let d = self.grid.dim();
        let n = self.grid.n();
        let field = self.chi(j, be);
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let s = (y[k] + 0.5) * n as f64;
            let fl = s.floor();
            frac[k] = s - fl;
            base[k] = (fl as i64).rem_euclid(n as i64) as usize;
        }
        let mut acc = 0.0;
        for a in 0..(1 << d) {
            let mut w = 1.0;
            let mut m = base.clone();
            for k in 0..d {
                if a >> k & 1 == 1 {
                    w *= frac[k];
                    m[k] = (m[k] + 1) % n;
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                acc += w * field[self.grid.flat_index(&m) * d + ga];
            }
        }
        acc
    }
}

/// Solves the `d^2` periodic corrector problems `L_1(chi_j^beta + P_j^beta) = 0`
/// with zero cell mean.
pub fn solve_correctors(field: &CoefficientField, grid: CellGrid, tol: f64) -> Result<CorrectorSet> {
    let problem = CellProblem::new(field, grid)?;
    solve_correctors_with(&problem, tol)
}

pub fn solve_correctors_with(problem: &CellProblem, tol: f64) -> Result<CorrectorSet> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let d = problem.grid.dim();
    let mut chi = Vec::with_capacity(d * d);
    let mut grad = Vec::with_capacity(d * d);
    let mut stats = Vec::with_capacity(d * d);
    let solved: Vec<(Vec<f64>, CgStats)> = (0..d * d)
        .into_par_iter()
        .map(|p| problem.solve_corrector(p / d, p % d, tol))
        .collect::<Result<_>>()?;
    for (x, s) in solved {
        grad.push(problem.qp_gradients(&x));
        chi.push(x);
        stats.push(s);
    }
    Ok(CorrectorSet {
        grid: problem.grid,
        chi,
        grad,
        stats,
    })
}

/// The effective tensor together with its ellipticity certificate.
#[derive(Clone, Debug, Serialize)]
pub struct HomogenizedTensor {
    pub a_hat: ElasticityTensor,
    pub certified_bounds: EllipticityBounds,
    /// Relative symmetry defect before certification.
    pub symmetry_residual: f64,
}

/// Cell average of `A (I + grad chi)`.
pub fn homogenized_tensor(field: &CoefficientField, chi: &CorrectorSet) -> Result<HomogenizedTensor> {
    let problem = CellProblem::new(field, chi.grid)?;
    homogenized_tensor_with(&problem, chi)
}

pub fn homogenized_tensor_with(problem: &CellProblem, chi: &CorrectorSet) -> Result<HomogenizedTensor> {
    let a_hat = average_flux(problem, chi);
    let sym = symmetry_residual(&a_hat);
    if sym > SYMMETRY_TOL {
        return Err(Error::SymmetryResidualExceeded {
            residual: sym,
            tol: SYMMETRY_TOL,
        });
    }
    let (k1, k2) = tensor_bounds(&a_hat);
    if k1 <= 0.0 {
        return Err(Error::NonElliptic {
            quotient: k1,
            y: vec![],
        });
    }
    Ok(HomogenizedTensor {
        a_hat,
        certified_bounds: EllipticityBounds::new(k1, k2)?,
        symmetry_residual: sym,
    })
}

/// Quadrature average of `a_{ij}^{ab} + a_{ik}^{ag} d_k chi_j^{gb}`, without
/// any symmetry check.
pub(crate) fn average_flux(problem: &CellProblem, chi: &CorrectorSet) -> ElasticityTensor {
    let grid = problem.grid;
    let d = grid.dim();
    let nq = grid.local_count();
    let w = problem.reference.weight;
    let mut sums = vec![CompensatedSum::default(); d.pow(4)];
    for e in 0..grid.element_count() {
        for q in 0..nq {
            let t = problem.tensor_at(e, q);
            for i in 0..d {
                for j in 0..d {
                    for al in 0..d {
                        for be in 0..d {
                            let mut s = t.get(i, j, al, be);
                            for k in 0..d {
                                for ga in 0..d {
                                    s += t.get(i, k, al, ga) * chi.grad_at(j, be, e, q, ga, k);
                                }
                            }
                            sums[((i * d + j) * d + al) * d + be].add(w * s);
                        }
                    }
                }
            }
        }
    }
    ElasticityTensor::from_fn(d, |i, j, al, be| sums[((i * d + j) * d + al) * d + be].value())
}

/// Shared handle used by the two-scale module to sample correctors.
pub type SharedCorrectors = Arc<CorrectorSet>;
