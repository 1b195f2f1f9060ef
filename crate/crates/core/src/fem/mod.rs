//! Bilinear finite elements for `-div(A grad u) = F` on a rectangle with
//! displacement data on the Dirichlet edges and tractions on the rest.

pub mod element;
mod multigrid;
mod norms;
mod operator;
pub mod manufactured;
mod rigid;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, pcg, CgOptions, CgStats, Jacobi, LinearOperator, Preconditioner};
use crate::mesh::{Edge, Mesh};
use crate::tensors::{CoefficientField, ElasticityTensor};

pub use element::{element_stiffness, ElementMatrix, PointTensor};
pub use multigrid::Multigrid;
pub use norms::{
    element_gradient, element_value, h1_seminorm_squared, l2_inner, l2_norm, quadrature_points, sym_grad_norm,
    Gradient,
};
pub use operator::ElementOperator;
pub use rigid::{
    compatibility_check, korn_probe, rigid_body_basis, CompatibilityReport, KornProbe, RigidBodyBasis,
    COMPATIBILITY_TOL,
};

pub const DEFAULT_FEM_TOL: f64 = 1e-10;

/// Vector field on the plane.
pub type VectorFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;
/// Traction prescribed on a boundary edge.
pub type TractionFn = Arc<dyn Fn([f64; 2], Edge) -> [f64; 2] + Send + Sync>;

pub fn zero_vector_fn() -> VectorFn {
    Arc::new(|_| [0.0, 0.0])
}

pub fn zero_traction_fn() -> TractionFn {
    Arc::new(|_, _| [0.0, 0.0])
}

/// Coefficient of the macroscopic operator.
#[derive(Clone, Debug)]
pub enum Coefficient {
    Constant(ElasticityTensor),
    /// `x -> A(x / epsilon)`
    Periodic { field: CoefficientField, epsilon: f64 },
}

impl Coefficient {
    pub fn tensor_at(&self, x: [f64; 2]) -> ElasticityTensor {
        match self {
            Coefficient::Constant(t) => t.clone(),
            Coefficient::Periodic { field, epsilon } => field.evaluate(&[x[0] / epsilon, x[1] / epsilon]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemMode {
    Mixed,
    Dirichlet,
    Neumann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
pub enum PreconditionerKind {
    #[default]
    Multigrid,
    Jacobi,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: PreconditionerKind,
}

impl SolverOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            max_iter: 20_000,
            preconditioner: PreconditionerKind::Multigrid,
        }
    }
}

#[derive(Clone)]
pub struct MixedProblemSpec {
    pub mesh: Mesh,
    pub coefficient: Coefficient,
    pub body_force: VectorFn,
    pub dirichlet_data: VectorFn,
    pub neumann_data: TractionFn,
    pub mode: ProblemMode,
}

impl fmt::Debug for MixedProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MixedProblemSpec")
            .field("nx", &self.mesh.nx())
            .field("ny", &self.mesh.ny())
            .field("coefficient", &self.coefficient)
            .field("mode", &self.mode)
            .finish_non_exhaustive()
    }
}

impl MixedProblemSpec {
    /// Mode inferred from the mesh's boundary partition.
    pub fn new(
        mesh: Mesh,
        coefficient: Coefficient,
        body_force: VectorFn,
        dirichlet_data: VectorFn,
        neumann_data: TractionFn,
    ) -> Self {
        let p = mesh.partition();
        let mode = if p.is_pure_neumann() {
            ProblemMode::Neumann
        } else if p.neumann_edges().is_empty() {
            ProblemMode::Dirichlet
        } else {
            ProblemMode::Mixed
        };
        Self {
            mesh,
            coefficient,
            body_force,
            dirichlet_data,
            neumann_data,
            mode,
        }
    }

    /// Same data on another mesh of the same rectangle.
    pub fn with_mesh(&self, mesh: Mesh) -> Self {
        Self {
            mesh,
            ..self.clone()
        }
    }

    pub fn with_coefficient(&self, coefficient: Coefficient) -> Self {
        Self {
            coefficient,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.mesh.partition();
        let consistent = match self.mode {
            ProblemMode::Neumann => p.is_pure_neumann(),
            ProblemMode::Dirichlet => !p.is_pure_neumann() && p.neumann_edges().is_empty(),
            ProblemMode::Mixed => !p.is_pure_neumann(),
        };
        if !consistent {
            return Err(Error::IllPosed(format!(
                "mode {:?} does not match the boundary partition",
                self.mode
            )));
        }
        if self.mode != ProblemMode::Neumann && p.dirichlet_edges().is_empty() {
            return Err(Error::IllPosed("no Dirichlet edge in a mixed problem".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscreteSolution {
    /// Nodal displacement, component `alpha` of node `n` at `2 n + alpha`.
    pub u: Vec<f64>,
    pub stats: CgStats,
    /// Discrete `L^2` inner products with the rigid-body basis (Neumann mode only).
    pub orthogonality: Vec<f64>,
}

/// Compressed sparse rows.
#[derive(Clone, Debug, Default)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Largest `|K_rc - K_cr|` relative to the largest entry.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                worst = worst.max((self.values[k] - self.get(self.cols[k], r)).abs());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            worst
        }
    }
}

impl LinearOperator for CsrMatrix {
    fn len(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(|k| self.values[k] * x[self.cols[k]])
                .sum();
        }
    }
}

/// Unconstrained stiffness together with the reduced load.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub stiffness: CsrMatrix,
    /// Body force and traction integrals, before any constraint.
    pub raw_load: Vec<f64>,
    /// Prescribed values on Dirichlet degrees of freedom, zero elsewhere.
    pub lift: Vec<f64>,
    /// `raw_load - K lift` on free degrees of freedom, zero on fixed ones.
    pub load: Vec<f64>,
    pub fixed: Vec<bool>,
}

pub fn assemble(spec: &MixedProblemSpec) -> Result<AssembledSystem> {
    spec.validate()?;
    let op = ElementOperator::new(&spec.mesh, &spec.coefficient, false)?;
    let mesh = &spec.mesh;
    let n = 2 * mesh.node_count();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(mesh.element_count() * 64);
    for e in 0..mesh.element_count() {
        let (ex, ey) = (e % mesh.nx(), e / mesh.nx());
        let k = op.element_matrix(ex, ey);
        let nodes = mesh.element_nodes(e);
        for a in 0..4 {
            for al in 0..2 {
                for b in 0..4 {
                    for be in 0..2 {
                        triplets.push((2 * nodes[a] + al, 2 * nodes[b] + be, k[(a * 2 + al) * 8 + b * 2 + be]));
                    }
                }
            }
        }
    }
    triplets.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    let mut rows: Vec<usize> = Vec::new();
    let mut cols: Vec<usize> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (r, c, v) in triplets {
        if rows.last() == Some(&r) && cols.last() == Some(&c) {
            *values.last_mut().expect("nonempty") += v;
        } else {
            rows.push(r);
            cols.push(c);
            values.push(v);
        }
    }
    let mut row_ptr = vec![0; n + 1];
    for &r in &rows {
        row_ptr[r + 1] += 1;
    }
    for r in 0..n {
        row_ptr[r + 1] += row_ptr[r];
    }
    let stiffness = CsrMatrix {
        n,
        row_ptr,
        cols,
        values,
    };
    let (raw_load, lift, load, fixed) = reduced_load(spec, &op);
    Ok(AssembledSystem {
        stiffness,
        raw_load,
        lift,
        load,
        fixed,
    })
}

/// Body-force and traction integrals against every shape function.
pub fn load_vector(spec: &MixedProblemSpec) -> Vec<f64> {
    let mesh = &spec.mesh;
    let mut b = vec![0.0; 2 * mesh.node_count()];
    let w = 0.25 * mesh.hx() * mesh.hy();
    for e in 0..mesh.element_count() {
        let (ex, ey) = (e % mesh.nx(), e / mesh.nx());
        let nodes = mesh.element_nodes(e);
        for q in 0..4 {
            let [s, t] = element::gauss_point(q);
            let x = mesh.grid_point(ex as f64 + s, ey as f64 + t);
            let f = (spec.body_force)(x);
            let n = element::shape(s, t);
            for a in 0..4 {
                b[2 * nodes[a]] += w * f[0] * n[a];
                b[2 * nodes[a] + 1] += w * f[1] * n[a];
            }
        }
    }
    for edge in mesh.partition().neumann_edges() {
        for (n0, n1) in mesh.edge_segments(edge) {
            let (x0, x1) = (mesh.node_coord(n0), mesh.node_coord(n1));
            let len = ((x1[0] - x0[0]).powi(2) + (x1[1] - x0[1]).powi(2)).sqrt();
            for g in crate::cell::GAUSS {
                let x = [x0[0] + g * (x1[0] - x0[0]), x0[1] + g * (x1[1] - x0[1])];
                let tr = (spec.neumann_data)(x, edge);
                for (node, phi) in [(n0, 1.0 - g), (n1, g)] {
                    b[2 * node] += 0.5 * len * tr[0] * phi;
                    b[2 * node + 1] += 0.5 * len * tr[1] * phi;
                }
            }
        }
    }
    b
}

type ReducedLoad = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<bool>);

fn reduced_load(spec: &MixedProblemSpec, op: &ElementOperator) -> ReducedLoad {
    let mesh = &spec.mesh;
    let raw = load_vector(spec);
    let fixed = if spec.mode == ProblemMode::Neumann {
        vec![false; raw.len()]
    } else {
        operator::dirichlet_mask(mesh)
    };
    let mut lift = vec![0.0; raw.len()];
    for node in 0..mesh.node_count() {
        if fixed[2 * node] {
            let v = (spec.dirichlet_data)(mesh.node_coord(node));
            lift[2 * node] = v[0];
            lift[2 * node + 1] = v[1];
        }
    }
    let mut klift = vec![0.0; raw.len()];
    op.apply_unconstrained(&lift, &mut klift);
    let load = raw
        .iter()
        .zip(&klift)
        .zip(&fixed)
        .map(|((r, k), &f)| if f { 0.0 } else { r - k })
        .collect();
    (raw, lift, load, fixed)
}

fn build_preconditioner(op: &ElementOperator, mesh: &Mesh, kind: PreconditionerKind) -> Box<dyn Preconditioner> {
    if kind == PreconditionerKind::Multigrid {
        if let Ok(mg) = Multigrid::new(op.clone(), mesh) {
            return Box::new(mg);
        }
    }
    Box::new(Jacobi::new(&op.diagonal()))
}

/// Solves a mixed or Dirichlet problem; Dirichlet values are copied, not solved for.
pub fn solve_mixed(spec: &MixedProblemSpec, tol: f64) -> Result<DiscreteSolution> {
    solve_mixed_with(spec, SolverOptions::new(tol))
}

pub fn solve_mixed_with(spec: &MixedProblemSpec, opts: SolverOptions) -> Result<DiscreteSolution> {
    spec.validate()?;
    if spec.mode == ProblemMode::Neumann {
        return Err(Error::IllPosed("pure Neumann problems go through solve_neumann".into()));
    }
    let op = ElementOperator::new(&spec.mesh, &spec.coefficient, true)?;
    let (_, lift, load, _) = reduced_load(spec, &op);
    let pre = build_preconditioner(&op, &spec.mesh, opts.preconditioner);
    let mut v = vec![0.0; load.len()];
    let stats = pcg(&op, pre.as_ref(), &load, &mut v, CgOptions::new(opts.tol, opts.max_iter), None)?;
    let u = v
        .iter()
        .zip(&lift)
        .zip(op.fixed())
        .map(|((vi, li), &f)| if f { *li } else { *vi })
        .collect();
    Ok(DiscreteSolution {
        u,
        stats,
        orthogonality: Vec::new(),
    })
}

/// Solves the pure traction problem in the complement of the rigid motions.
pub fn solve_neumann(spec: &MixedProblemSpec, tol: f64) -> Result<DiscreteSolution> {
    solve_neumann_with(spec, SolverOptions::new(tol))
}

pub fn solve_neumann_with(spec: &MixedProblemSpec, opts: SolverOptions) -> Result<DiscreteSolution> {
    spec.validate()?;
    if spec.mode != ProblemMode::Neumann {
        return Err(Error::IllPosed("solve_neumann needs a pure Neumann problem".into()));
    }
    let report = compatibility_check(spec);
    if !report.pass {
        return Err(Error::IncompatibleData {
            residuals: report.residuals.clone(),
            tol: report.tol,
        });
    }
    let mesh = &spec.mesh;
    let op = ElementOperator::new(mesh, &spec.coefficient, false)?;
    let load = load_vector(spec);
    let nodal = rigid::euclidean_rigid_modes(mesh);
    let project = |v: &mut [f64]| {
        for m in &nodal {
            let c = dot(v, m);
            crate::linalg::axpy(-c, m, v);
        }
    };
    let pre = build_preconditioner(&op, mesh, opts.preconditioner);
    let mut u = vec![0.0; load.len()];
    let stats = pcg(
        &op,
        pre.as_ref(),
        &load,
        &mut u,
        CgOptions::new(opts.tol, opts.max_iter),
        Some(&project),
    )?;
    let basis = rigid_body_basis(mesh);
    basis.orthogonalize(mesh, &mut u);
    let orthogonality = basis.inner_products(mesh, &u);
    Ok(DiscreteSolution {
        u,
        stats,
        orthogonality,
    })
}

/// Dispatches on the problem mode.
pub fn solve(spec: &MixedProblemSpec, opts: SolverOptions) -> Result<DiscreteSolution> {
    match spec.mode {
        ProblemMode::Neumann => solve_neumann_with(spec, opts),
        _ => solve_mixed_with(spec, opts),
    }
}

/// Bilinear interpolation of a nodal field from a mesh onto its `factor`
/// times refined copy.
pub fn prolongate(coarse: &Mesh, u: &[f64], factor: usize) -> Vec<f64> {
    let (nx, ny) = (coarse.nx() * factor, coarse.ny() * factor);
    let mut out = vec![0.0; 2 * (nx + 1) * (ny + 1)];
    let f = factor as f64;
    for j in 0..=ny {
        let (cj, tj) = (j / factor, (j % factor) as f64 / f);
        for i in 0..=nx {
            let (ci, ti) = (i / factor, (i % factor) as f64 / f);
            let at = |a: usize, b: usize, c: usize| {
                let a = a.min(coarse.nx());
                let b = b.min(coarse.ny());
                u[2 * coarse.node_index(a, b) + c]
            };
            for c in 0..2 {
                let v = (1.0 - ti) * (1.0 - tj) * at(ci, cj, c)
                    + ti * (1.0 - tj) * at(ci + 1, cj, c)
                    + (1.0 - ti) * tj * at(ci, cj + 1, c)
                    + ti * tj * at(ci + 1, cj + 1, c);
                out[2 * (j * (nx + 1) + i) + c] = v;
            }
        }
    }
    out
}

/// Energy `u . K u` of a nodal field.
pub fn energy(spec: &MixedProblemSpec, u: &[f64]) -> Result<f64> {
    let op = ElementOperator::new(&spec.mesh, &spec.coefficient, false)?;
    let mut ku = vec![0.0; u.len()];
    op.apply_unconstrained(u, &mut ku);
    Ok(dot(u, &ku))
}
