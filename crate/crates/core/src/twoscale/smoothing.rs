//! The mollifier, uniform grid fields, and discrete convolution at scale
//! `epsilon`.

use rayon::prelude::*;
use serde::Serialize;

use crate::cell::CorrectorSet;
use crate::error::{Error, Result};
use crate::mesh::{DomainSpec, Mesh};

/// Radius of the mollifier support.
pub const SUPPORT_RADIUS: f64 = 0.5;

/// Normalized radial bump `C exp(-1 / (1 - |2x|^2))` on `|x| < 1/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Mollifier {
    normalization: f64,
}

impl Default for Mollifier {
    fn default() -> Self {
        Self::standard()
    }
}

impl Mollifier {
    pub fn standard() -> Self {
        // 2 pi int_0^{1/2} r exp(-1 / (1 - 4 r^2)) dr by composite Simpson.
        let m = 4000;
        let step = SUPPORT_RADIUS / m as f64;
        let f = |r: f64| r * bump(4.0 * r * r);
        let mut acc = f(0.0) + f(SUPPORT_RADIUS);
        for k in 1..m {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(k as f64 * step);
        }
        let mass = 2.0 * std::f64::consts::PI * acc * step / 3.0;
        Self {
            normalization: 1.0 / mass,
        }
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn profile(&self, x: [f64; 2]) -> f64 {
        self.normalization * bump(4.0 * (x[0] * x[0] + x[1] * x[1]))
    }

    /// `phi_eps(x) = eps^{-2} phi(x / eps)`.
    pub fn scaled(&self, epsilon: f64, x: [f64; 2]) -> f64 {
        self.profile([x[0] / epsilon, x[1] / epsilon]) / (epsilon * epsilon)
    }
}

/// `exp(-1 / (1 - s))` for `s < 1`, else zero.
fn bump(s: f64) -> f64 {
    if s < 1.0 {
        (-1.0 / (1.0 - s)).exp()
    } else {
        0.0
    }
}

/// A multi-component field on the nodes of a uniform box grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub origin: [f64; 2],
    pub h: [f64; 2],
    /// Node counts along each axis.
    pub shape: [usize; 2],
    pub comps: usize,
    /// Component `c` of node `(i, j)` at `(j * shape[0] + i) * comps + c`.
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(origin: [f64; 2], h: [f64; 2], shape: [usize; 2], comps: usize) -> Self {
        Self {
            origin,
            h,
            shape,
            comps,
            values: vec![0.0; shape[0] * shape[1] * comps],
        }
    }

    pub fn from_fn(origin: [f64; 2], h: [f64; 2], shape: [usize; 2], comps: usize, f: impl Fn([f64; 2], &mut [f64])) -> Self {
        let mut out = Self::zeros(origin, h, shape, comps);
        for j in 0..shape[1] {
            for i in 0..shape[0] {
                let x = out.point(i, j);
                let k = (j * shape[0] + i) * comps;
                f(x, &mut out.values[k..k + comps]);
            }
        }
        out
    }

    /// The nodal field `u` of a mesh, `comps` values per node.
    pub fn from_mesh(mesh: &Mesh, u: &[f64], comps: usize) -> Self {
        assert_eq!(u.len(), mesh.node_count() * comps);
        Self {
            origin: mesh.domain().lower,
            h: [mesh.hx(), mesh.hy()],
            shape: [mesh.nx() + 1, mesh.ny() + 1],
            comps,
            values: u.to_vec(),
        }
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.h[0],
            self.origin[1] + j as f64 * self.h[1],
        ]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.values[(j * self.shape[0] + i) * self.comps + c]
    }

    pub fn node_count(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    /// Nodal-rule `L^2` norm over the box.
    pub fn l2_norm(&self) -> f64 {
        (self.h[0] * self.h[1] * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Forward-difference `L^2` norm of the gradient over the box.
    pub fn gradient_norm(&self) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.shape[1] {
            for i in 0..self.shape[0] {
                for c in 0..self.comps {
                    let v = self.get(i, j, c);
                    if i + 1 < self.shape[0] {
                        acc += ((self.get(i + 1, j, c) - v) / self.h[0]).powi(2);
                    }
                    if j + 1 < self.shape[1] {
                        acc += ((self.get(i, j + 1, c) - v) / self.h[1]).powi(2);
                    }
                }
            }
        }
        (self.h[0] * self.h[1] * acc).sqrt()
    }

    pub fn h1_norm(&self) -> f64 {
        self.l2_norm().hypot(self.gradient_norm())
    }

    /// Gradients at the cell centers, `comps * 2` values per center with
    /// `d_k u^c` at `c * 2 + k`.
    pub fn center_gradients(&self) -> GridField {
        let shape = [self.shape[0] - 1, self.shape[1] - 1];
        let origin = [self.origin[0] + 0.5 * self.h[0], self.origin[1] + 0.5 * self.h[1]];
        let comps = 2 * self.comps;
        let mut out = GridField::zeros(origin, self.h, shape, comps);
        for j in 0..shape[1] {
            for i in 0..shape[0] {
                let k = (j * shape[0] + i) * comps;
                for c in 0..self.comps {
                    let (v00, v10) = (self.get(i, j, c), self.get(i + 1, j, c));
                    let (v01, v11) = (self.get(i, j + 1, c), self.get(i + 1, j + 1, c));
                    out.values[k + 2 * c] = 0.5 * (v10 - v00 + v11 - v01) / self.h[0];
                    out.values[k + 2 * c + 1] = 0.5 * (v01 - v00 + v11 - v10) / self.h[1];
                }
            }
        }
        out
    }
}

/// Convolution weights for one offset between source and target lattices:
/// source point `x - (k + shift) h` carries weight `w_k`.
#[derive(Clone, Debug)]
pub struct Stencil {
    pub shift: f64,
    pub weights: Vec<(i64, i64, f64)>,
}

impl Stencil {
    fn build(mollifier: &Mollifier, epsilon: f64, h: [f64; 2], shift: f64) -> Result<Self> {
        let reach = [(0.5 * epsilon / h[0]).ceil() as i64 + 1, (0.5 * epsilon / h[1]).ceil() as i64 + 1];
        let mut weights = Vec::new();
        for b in -reach[1]..=reach[1] {
            for a in -reach[0]..=reach[0] {
                let y = [(a as f64 + shift) * h[0], (b as f64 + shift) * h[1]];
                let w = mollifier.scaled(epsilon, y);
                if w > 0.0 {
                    weights.push((a, b, w));
                }
            }
        }
        let total: f64 = weights.iter().map(|w| w.2).sum();
        if weights.is_empty() || !(total > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mollifier at epsilon = {epsilon} has no support on a grid of spacing {h:?}"
            )));
        }
        weights.iter_mut().for_each(|w| w.2 /= total);
        Ok(Self { shift, weights })
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().map(|w| w.2).sum()
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().map(|w| w.2).fold(f64::INFINITY, f64::min)
    }
}

/// `S_eps`: convolution with `phi_eps` on uniform grids of spacing `h`.
#[derive(Clone, Debug)]
pub struct SmoothingOperator {
    epsilon: f64,
    h: [f64; 2],
    mollifier: Mollifier,
    /// Node-to-node weights.
    node: Stencil,
    /// Center-to-node weights.
    half: Stencil,
}

impl SmoothingOperator {
    pub fn new(mollifier: Mollifier, epsilon: f64, h: [f64; 2]) -> Result<Self> {
        if !(epsilon > 0.0) || !(h[0] > 0.0) || !(h[1] > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "smoothing needs positive epsilon and spacing, got {epsilon} and {h:?}"
            )));
        }
        Ok(Self {
            epsilon,
            h,
            mollifier,
            node: Stencil::build(&mollifier, epsilon, h, 0.0)?,
            half: Stencil::build(&mollifier, epsilon, h, 0.5)?,
        })
    }

    pub fn standard(epsilon: f64, h: [f64; 2]) -> Result<Self> {
        Self::new(Mollifier::standard(), epsilon, h)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mollifier(&self) -> &Mollifier {
        &self.mollifier
    }

    pub fn node_stencil(&self) -> &Stencil {
        &self.node
    }

    pub fn half_stencil(&self) -> &Stencil {
        &self.half
    }

    /// Stencil radius `ceil(eps / 2h)` in nodes along each axis.
    pub fn radius(&self) -> [usize; 2] {
        [
            (0.5 * self.epsilon / self.h[0] - 1e-9).ceil().max(0.0) as usize,
            (0.5 * self.epsilon / self.h[1] - 1e-9).ceil().max(0.0) as usize,
        ]
    }

    /// Margin a source grid needs beyond the target box.
    pub fn required_margin(&self) -> f64 {
        let r = self.radius();
        (r[0] as f64 * self.h[0]).max(r[1] as f64 * self.h[1]).max(0.5 * self.epsilon)
    }

    /// The largest node box whose smoothing is determined by `src`.
    pub fn interior_box(&self, src: &GridField) -> Result<([f64; 2], [usize; 2])> {
        let r = self.radius();
        if src.shape[0] <= 2 * r[0] || src.shape[1] <= 2 * r[1] {
            return Err(Error::InsufficientPadding {
                available: 0.5 * (src.shape[0].min(src.shape[1]) as f64 - 1.0) * self.h[0].min(self.h[1]),
                required: self.required_margin(),
            });
        }
        Ok((
            [src.origin[0] + r[0] as f64 * src.h[0], src.origin[1] + r[1] as f64 * src.h[1]],
            [src.shape[0] - 2 * r[0], src.shape[1] - 2 * r[1]],
        ))
    }

    /// `S_eps src` at the nodes of the box `(origin, shape)` with spacing `h`.
    pub fn convolve(&self, src: &GridField, origin: [f64; 2], shape: [usize; 2]) -> Result<GridField> {
        if (src.h[0] - self.h[0]).abs() > 1e-12 * self.h[0] || (src.h[1] - self.h[1]).abs() > 1e-12 * self.h[1] {
            return Err(Error::ResolutionMismatch(format!(
                "source spacing {:?} differs from the operator spacing {:?}",
                src.h, self.h
            )));
        }
        let mut offset = [0i64; 2];
        let mut shift = [0.0; 2];
        for k in 0..2 {
            let s = (origin[k] - src.origin[k]) / self.h[k];
            let base = s.floor();
            let frac = s - base;
            if (frac - 0.5).abs() < 1e-6 {
                shift[k] = 0.5;
                offset[k] = base as i64;
            } else if frac < 1e-6 || frac > 1.0 - 1e-6 {
                offset[k] = s.round() as i64;
            } else {
                return Err(Error::ResolutionMismatch(format!(
                    "target lattice is offset by {frac} cells from the source lattice"
                )));
            }
        }
        if shift[0] != shift[1] {
            return Err(Error::ResolutionMismatch("source and target lattices are staggered along one axis only".into()));
        }
        let stencil = if shift[0] == 0.0 { &self.node } else { &self.half };
        // Distance from the target box to the edge of the source box.
        let mut available = f64::INFINITY;
        for k in 0..2 {
            let lo = origin[k] - src.origin[k];
            let hi = (src.origin[k] + (src.shape[k] - 1) as f64 * self.h[k]) - (origin[k] + (shape[k].max(1) - 1) as f64 * self.h[k]);
            available = available.min(lo).min(hi);
        }
        let required = self.required_margin();
        if available < required - 1e-9 * self.h[0] {
            return Err(Error::InsufficientPadding { available, required });
        }
        let comps = src.comps;
        let (sx, sy) = (src.shape[0] as i64, src.shape[1] as i64);
        let mut out = GridField::zeros(origin, self.h, shape, comps);
        let row_len = shape[0] * comps;
        out.values.par_chunks_mut(row_len).enumerate().for_each(|(j, row)| {
            for i in 0..shape[0] {
                let acc = &mut row[i * comps..(i + 1) * comps];
                for &(a, b, w) in &stencil.weights {
                    let si = i as i64 + offset[0] - a;
                    let sj = j as i64 + offset[1] - b;
                    debug_assert!(si >= 0 && sj >= 0 && si < sx && sj < sy);
                    let base = ((sj * sx + si) as usize) * comps;
                    for (c, v) in acc.iter_mut().enumerate() {
                        *v += w * src.values[base + c];
                    }
                }
            }
        });
        Ok(out)
    }
}

/// Smooths a padded nodal field onto the nodes of `mesh`, returned in the
/// mesh's nodal layout.
pub fn mollify(op: &SmoothingOperator, field: &GridField, mesh: &Mesh) -> Result<Vec<f64>> {
    let out = op.convolve(field, mesh.domain().lower, [mesh.nx() + 1, mesh.ny() + 1])?;
    Ok(out.values)
}

/// `S_eps grad u` at the nodes of `mesh`, with the gradient taken at cell
/// centers of the padded field first. Entry `[beta][j]` is `d_j u^beta`.
pub fn smoothed_gradient(op: &SmoothingOperator, field: &GridField, mesh: &Mesh) -> Result<Vec<[[f64; 2]; 2]>> {
    if field.comps != 2 {
        return Err(Error::InvalidArgument(format!("expected a vector field, got {} components", field.comps)));
    }
    let grads = field.center_gradients();
    let out = op.convolve(&grads, mesh.domain().lower, [mesh.nx() + 1, mesh.ny() + 1])?;
    Ok(out
        .values
        .chunks_exact(4)
        .map(|g| [[g[0], g[1]], [g[2], g[3]]])
        .collect())
}

/// A 1-periodic scalar function on the cell, constant on each element of an
/// `n x n` grid of `[-1/2, 1/2]^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellFunction {
    n: usize,
    values: Vec<f64>,
}

impl CellFunction {
    /// Samples `f` at element centers.
    pub fn from_fn(n: usize, f: impl Fn([f64; 2]) -> f64) -> Self {
        let h = 1.0 / n as f64;
        let values = (0..n * n)
            .map(|e| f([-0.5 + ((e % n) as f64 + 0.5) * h, -0.5 + ((e / n) as f64 + 0.5) * h]))
            .collect();
        Self { n, values }
    }

    /// `|grad chi|` with all corrector components, averaged over each element.
    pub fn corrector_gradient_magnitude(chi: &CorrectorSet) -> Result<Self> {
        let grid = chi.grid();
        if grid.dim() != 2 {
            return Err(Error::InvalidArgument("cell functions are two-dimensional".into()));
        }
        let nq = grid.local_count();
        let values = (0..grid.element_count())
            .map(|e| {
                let mut acc = 0.0;
                for q in 0..nq {
                    for j in 0..2 {
                        for be in 0..2 {
                            for ga in 0..2 {
                                for k in 0..2 {
                                    acc += chi.grad_at(j, be, e, q, ga, k).powi(2);
                                }
                            }
                        }
                    }
                }
                (acc / nq as f64).sqrt()
            })
            .collect();
        Ok(Self { n: grid.n(), values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Value at any point of the plane, by periodicity.
    pub fn eval(&self, y: [f64; 2]) -> f64 {
        let n = self.n as f64;
        let i = (((y[0] + 0.5) * n).floor() as i64).rem_euclid(self.n as i64) as usize;
        let j = (((y[1] + 0.5) * n).floor() as i64).rem_euclid(self.n as i64) as usize;
        self.values[j * self.n + i]
    }

    /// `|f|_{L^2(Q)}`, exact for the piecewise constant representation.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    /// Mean of `|f(x / eps)|^2` over the four quarter-cells around `x`.
    fn square_near(&self, x: [f64; 2], epsilon: f64, h: [f64; 2]) -> f64 {
        let mut acc = 0.0;
        for (dx, dy) in [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)] {
            let y = [(x[0] + dx * h[0]) / epsilon, (x[1] + dy * h[1]) / epsilon];
            acc += self.eval(y).powi(2);
        }
        0.25 * acc
    }
}

/// `|S_eps u|_{L^2} / |u|_{L^2}` with `S_eps u` on the interior box of `u`.
pub fn contraction_ratio(op: &SmoothingOperator, u: &GridField) -> Result<f64> {
    let (origin, shape) = op.interior_box(u)?;
    let su = op.convolve(u, origin, shape)?;
    let nu = u.l2_norm();
    Ok(if nu == 0.0 { 0.0 } else { su.l2_norm() / nu })
}

/// `|S_eps u - u|_{L^2} / (eps |grad u|_{L^2})` over the interior box of `u`.
pub fn smoothing_error_ratio(op: &SmoothingOperator, u: &GridField) -> Result<f64> {
    let (origin, shape) = op.interior_box(u)?;
    let su = op.convolve(u, origin, shape)?;
    let r = op.radius();
    let mut diff = su.clone();
    let mut restricted = su.clone();
    for j in 0..shape[1] {
        for i in 0..shape[0] {
            for c in 0..u.comps {
                let k = (j * shape[0] + i) * u.comps + c;
                let v = u.get(i + r[0], j + r[1], c);
                restricted.values[k] = v;
                diff.values[k] -= v;
            }
        }
    }
    let g = restricted.gradient_norm();
    Ok(if g == 0.0 { 0.0 } else { diff.l2_norm() / (op.epsilon() * g) })
}

/// Observed constant in `|f^eps S_eps u|_{L^2} <= C |f|_{L^2(Q)} |u|_{L^2}`
/// for a scalar field `u`.
pub fn periodic_weighted_bound_check(op: &SmoothingOperator, f: &CellFunction, u: &GridField) -> Result<f64> {
    let fq = f.l2_norm();
    let nu = u.l2_norm();
    if fq == 0.0 || nu == 0.0 {
        return Ok(0.0);
    }
    let (origin, shape) = op.interior_box(u)?;
    let su = op.convolve(u, origin, shape)?;
    let mut acc = 0.0;
    for j in 0..shape[1] {
        for i in 0..shape[0] {
            let f2 = f.square_near(su.point(i, j), op.epsilon(), su.h);
            for c in 0..su.comps {
                acc += f2 * su.get(i, j, c).powi(2);
            }
        }
    }
    Ok((su.h[0] * su.h[1] * acc).sqrt() / (fq * nu))
}

/// Distance from any point of the plane to the boundary of the rectangle.
pub fn distance_to_boundary(domain: &DomainSpec, x: [f64; 2]) -> f64 {
    let inside = (0..2).all(|k| x[k] >= domain.lower[k] && x[k] <= domain.upper[k]);
    if inside {
        return domain.boundary_distance(x);
    }
    let dx = (domain.lower[0] - x[0]).max(x[0] - domain.upper[0]).max(0.0);
    let dy = (domain.lower[1] - x[1]).max(x[1] - domain.upper[1]).max(0.0);
    dx.hypot(dy)
}

/// `int_{layer} |f^eps|^2 |S_eps u|^2 / (eps |f|^2_{L^2(Q)} |u|_{H^1} |u|_{L^2})`,
/// the layer being every point within `eps` of the boundary of `domain`,
/// inside or outside. The norms of `u` are taken over its whole grid.
pub fn boundary_layer_ratio(op: &SmoothingOperator, f: &CellFunction, u: &GridField, domain: &DomainSpec) -> Result<f64> {
    let eps = op.epsilon();
    let fq = f.l2_norm();
    let (l2, h1) = (u.l2_norm(), u.h1_norm());
    if fq == 0.0 || l2 == 0.0 {
        return Ok(0.0);
    }
    let (origin, shape) = op.interior_box(u)?;
    for k in 0..2 {
        let hi = origin[k] + (shape[k] - 1) as f64 * u.h[k];
        if origin[k] > domain.lower[k] - eps || hi < domain.upper[k] + eps {
            return Err(Error::InsufficientPadding {
                available: (domain.lower[k] - origin[k]).min(hi - domain.upper[k]),
                required: eps,
            });
        }
    }
    let su = op.convolve(u, origin, shape)?;
    let mut acc = 0.0;
    for j in 0..shape[1] {
        for i in 0..shape[0] {
            let x = su.point(i, j);
            if distance_to_boundary(domain, x) >= eps {
                continue;
            }
            let f2 = f.square_near(x, eps, su.h);
            for c in 0..su.comps {
                acc += f2 * su.get(i, j, c).powi(2);
            }
        }
    }
    Ok(su.h[0] * su.h[1] * acc / (eps * fq * fq * h1 * l2))
}
