//! The two-scale approximation `u_0 + eps chi(x/eps) S_eps grad u~_0` and the
//! norms of its remainder `w_eps`.

mod extension;
mod smoothing;

use serde::Serialize;

pub use extension::{discrete_h2_norm, extend, Extension, ExtensionStats};
pub use smoothing::{
    boundary_layer_ratio, contraction_ratio, distance_to_boundary, mollify, periodic_weighted_bound_check,
    smoothed_gradient, smoothing_error_ratio, CellFunction, GridField, Mollifier, SmoothingOperator, Stencil,
    SUPPORT_RADIUS,
};

use crate::cell::CorrectorSet;
use crate::error::{Error, Result};
use crate::fem::{element_gradient, element_value, Gradient};
use crate::mesh::Mesh;

/// Smallest number of mesh cells per period accepted by the two-scale
/// comparison.
pub const MIN_CELLS_PER_PERIOD: usize = 8;

/// `eps / h` as an integer, or `ResolutionMismatch`.
pub fn cells_per_period(mesh: &Mesh, epsilon: f64) -> Result<usize> {
    let mut k = 0;
    for h in [mesh.hx(), mesh.hy()] {
        let r = epsilon / h;
        let ri = r.round();
        if ri < 1.0 || (r - ri).abs() > 1e-8 * r {
            return Err(Error::ResolutionMismatch(format!("epsilon / h = {r} is not an integer")));
        }
        if k != 0 && k != ri as usize {
            return Err(Error::ResolutionMismatch("mesh is not square at the period scale".into()));
        }
        k = ri as usize;
    }
    Ok(k)
}

/// `eps chi(x / eps) G(x)` at the nodes, contracted as
/// `sum_{j, beta} chi_j^{gamma beta} G[beta][j]`.
pub fn oscillatory_term(chi: &CorrectorSet, smoothed_grad: &[Gradient], epsilon: f64, mesh: &Mesh) -> Result<Vec<f64>> {
    let k = cells_per_period(mesh, epsilon)?;
    if k < MIN_CELLS_PER_PERIOD {
        return Err(Error::ResolutionMismatch(format!(
            "{k} mesh cells per period, need at least {MIN_CELLS_PER_PERIOD}"
        )));
    }
    if chi.grid().dim() != 2 {
        return Err(Error::InvalidArgument("correctors must be two-dimensional".into()));
    }
    if smoothed_grad.len() != mesh.node_count() {
        return Err(Error::InvalidArgument(format!(
            "gradient field has {} nodes, mesh has {}",
            smoothed_grad.len(),
            mesh.node_count()
        )));
    }
    let mut out = vec![0.0; 2 * mesh.node_count()];
    for (node, g) in smoothed_grad.iter().enumerate() {
        let x = mesh.node_coord(node);
        let y = [x[0] / epsilon, x[1] / epsilon];
        for ga in 0..2 {
            let mut acc = 0.0;
            for j in 0..2 {
                for be in 0..2 {
                    if g[be][j] != 0.0 {
                        acc += chi.interpolate(j, be, ga, &y) * g[be][j];
                    }
                }
            }
            out[2 * node + ga] = epsilon * acc;
        }
    }
    Ok(out)
}

/// Norms of `u_eps - u_0` and of the remainder `w_eps`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoScaleReport {
    pub epsilon: f64,
    /// `|u_eps - u_0|_{L^2}`
    #[serde(rename = "err_L2_u0")]
    pub err_l2_u0: f64,
    /// `|w_eps|_{H^1}`
    #[serde(rename = "err_H1_w")]
    pub err_h1_w: f64,
    /// `|delta grad w_eps|_{L^2}`
    pub err_weighted: f64,
    /// `|w_eps|_{H^1(Omega')}`
    pub err_interior: f64,
    /// Discrete `H^2` surrogate of `u_0`.
    #[serde(rename = "norm_u0_H2")]
    pub norm_u0_h2: f64,
    /// `|w_eps|_{H^1}` over the elements within `2 eps` of the boundary.
    #[serde(rename = "layer_H1_w")]
    pub layer_h1_w: f64,
    /// `|w_eps|_{H^1}` over the rest.
    #[serde(rename = "bulk_H1_w")]
    pub bulk_h1_w: f64,
    /// `|grad w_eps|_{L^2}`
    pub seminorm_w: f64,
    /// `|grad w_eps|_{L^2(Omega')}`
    pub interior_seminorm_w: f64,
    pub interior_margin: f64,
    pub c_ext: f64,
}

impl TwoScaleReport {
    pub const CSV_HEADER: [&'static str; 8] = [
        "epsilon",
        "err_L2_u0",
        "err_H1_w",
        "err_weighted",
        "err_interior",
        "norm_u0_H2",
        "layer_H1_w",
        "bulk_H1_w",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        [
            self.epsilon,
            self.err_l2_u0,
            self.err_h1_w,
            self.err_weighted,
            self.err_interior,
            self.norm_u0_h2,
            self.layer_h1_w,
            self.bulk_h1_w,
        ]
        .iter()
        .map(|v| format!("{v:e}"))
        .collect()
    }

    /// The error channel `name`, one of the rate-study channels.
    pub fn channel(&self, name: &str) -> Option<f64> {
        match name {
            "err_L2_u0" => Some(self.err_l2_u0),
            "err_H1_w" => Some(self.err_h1_w),
            "err_weighted" => Some(self.err_weighted),
            "err_interior" => Some(self.err_interior),
            _ => None,
        }
    }
}

/// The fields assembled along the way to a report.
#[derive(Clone, Debug)]
pub struct TwoScaleFields {
    pub smoothed_grad: Vec<Gradient>,
    pub term: Vec<f64>,
    pub w: Vec<f64>,
}

/// Per-element `(int |v|^2, int |grad v|^2)` by 2 x 2 Gauss quadrature.
fn element_squares(mesh: &Mesh, v: &[f64]) -> Vec<(f64, f64)> {
    let w = 0.25 * mesh.hx() * mesh.hy();
    (0..mesh.element_count())
        .map(|e| {
            let mut a = 0.0;
            let mut b = 0.0;
            for q in 0..4 {
                let val = element_value(mesh, v, e, q);
                let g = element_gradient(mesh, v, e, q);
                a += w * (val[0] * val[0] + val[1] * val[1]);
                b += w * g.iter().flatten().map(|x| x * x).sum::<f64>();
            }
            (a, b)
        })
        .collect()
}

/// The error-channel norms of a single nodal field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChannelNorms {
    pub l2: f64,
    pub h1: f64,
    /// `|delta grad v|_{L^2}`
    pub weighted: f64,
    /// `|v|_{H^1(Omega')}`
    pub interior: f64,
}

pub fn channel_norms(mesh: &Mesh, v: &[f64], interior_margin: f64) -> ChannelNorms {
    let dom = mesh.domain();
    let (mut l2, mut semi, mut weighted, mut interior) = (0.0, 0.0, 0.0, 0.0);
    for (e, (a, b)) in element_squares(mesh, v).into_iter().enumerate() {
        let delta = dom.boundary_distance(mesh.element_centroid(e));
        l2 += a;
        semi += b;
        weighted += delta * delta * b;
        if delta > interior_margin {
            interior += a + b;
        }
    }
    ChannelNorms {
        l2: l2.sqrt(),
        h1: (l2 + semi).sqrt(),
        weighted: weighted.sqrt(),
        interior: interior.sqrt(),
    }
}

/// Builds `w_eps = u_eps - u_0 - eps chi(x/eps) S_eps grad u~_0` on `mesh`.
pub fn two_scale_fields(u_eps: &[f64], u0: &[f64], chi: &CorrectorSet, epsilon: f64, mesh: &Mesh) -> Result<(TwoScaleFields, ExtensionStats)> {
    if u_eps.len() != u0.len() || u0.len() != 2 * mesh.node_count() {
        return Err(Error::InvalidArgument("solutions do not live on the given mesh".into()));
    }
    let op = SmoothingOperator::standard(epsilon, [mesh.hx(), mesh.hy()])?;
    let r = op.radius();
    let pad = r[0].max(r[1]) + 1;
    let ext = extend(u0, mesh, pad)?;
    let smoothed_grad = smoothed_gradient(&op, &ext.field, mesh)?;
    let term = oscillatory_term(chi, &smoothed_grad, epsilon, mesh)?;
    let w = u_eps
        .iter()
        .zip(u0)
        .zip(&term)
        .map(|((a, b), t)| a - b - t)
        .collect();
    Ok((TwoScaleFields { smoothed_grad, term, w }, ext.stats))
}

/// Compares a fine-scale solution with the homogenized one on the same mesh.
///
/// `Omega'` is the set of elements whose centroid lies farther than
/// `interior_margin` from the boundary; the weight of the weighted norm is
/// the boundary distance at each centroid.
pub fn two_scale_report(
    u_eps: &[f64],
    u0: &[f64],
    chi: &CorrectorSet,
    epsilon: f64,
    mesh: &Mesh,
    interior_margin: f64,
) -> Result<TwoScaleReport> {
    if !(interior_margin > 0.0) {
        return Err(Error::InvalidArgument(format!("interior margin must be positive, got {interior_margin}")));
    }
    let (fields, ext) = two_scale_fields(u_eps, u0, chi, epsilon, mesh)?;
    let diff: Vec<f64> = u_eps.iter().zip(u0).map(|(a, b)| a - b).collect();
    let diff_sq = element_squares(mesh, &diff);
    let w_sq = element_squares(mesh, &fields.w);
    let dom = mesh.domain();
    let mut l2_diff = 0.0;
    let (mut l2_w, mut semi_w) = (0.0, 0.0);
    let mut weighted = 0.0;
    let (mut int_l2, mut int_semi) = (0.0, 0.0);
    let (mut layer, mut bulk) = (0.0, 0.0);
    for e in 0..mesh.element_count() {
        let delta = dom.boundary_distance(mesh.element_centroid(e));
        let (a, b) = w_sq[e];
        l2_diff += diff_sq[e].0;
        l2_w += a;
        semi_w += b;
        weighted += delta * delta * b;
        if delta > interior_margin {
            int_l2 += a;
            int_semi += b;
        }
        if delta < 2.0 * epsilon {
            layer += a + b;
        } else {
            bulk += a + b;
        }
    }
    Ok(TwoScaleReport {
        epsilon,
        err_l2_u0: l2_diff.sqrt(),
        err_h1_w: (l2_w + semi_w).sqrt(),
        err_weighted: weighted.sqrt(),
        err_interior: (int_l2 + int_semi).sqrt(),
        norm_u0_h2: discrete_h2_norm(&GridField::from_mesh(mesh, u0, 2)),
        layer_h1_w: layer.sqrt(),
        bulk_h1_w: bulk.sqrt(),
        seminorm_w: semi_w.sqrt(),
        interior_seminorm_w: int_semi.sqrt(),
        interior_margin,
        c_ext: ext.c_ext,
    })
}

/// A piecewise linear cutoff in the boundary distance.
#[derive(Clone, Debug, Serialize)]
pub struct CutoffFamily {
    pub epsilon: f64,
    pub inner: f64,
    pub outer: f64,
    /// Nodal values of `theta`.
    pub theta: Vec<f64>,
    /// `1 / (outer - inner)`, the slope of the profile.
    pub profile_gradient_bound: f64,
    /// Largest `|grad theta_h|` over the element quadrature points.
    pub observed_gradient: f64,
    /// `observed_gradient * eps`.
    pub gradient_constant: f64,
}

/// `theta = 1` for `delta <= inner`, `0` for `delta >= outer`, linear between.
pub fn cutoff_profile(delta: f64, inner: f64, outer: f64) -> f64 {
    ((outer - delta) / (outer - inner)).clamp(0.0, 1.0)
}

pub fn build_cutoff(mesh: &Mesh, epsilon: f64, inner: f64, outer: f64) -> Result<CutoffFamily> {
    if !(inner > 0.0 && inner < outer) {
        return Err(Error::InvalidArgument(format!("cutoff needs 0 < inner < outer, got {inner}, {outer}")));
    }
    let dom = mesh.domain();
    let theta: Vec<f64> = (0..mesh.node_count())
        .map(|n| cutoff_profile(dom.boundary_distance(mesh.node_coord(n)), inner, outer))
        .collect();
    let as_vector: Vec<f64> = theta.iter().flat_map(|&t| [t, 0.0]).collect();
    let mut observed: f64 = 0.0;
    for e in 0..mesh.element_count() {
        for q in 0..4 {
            let g = element_gradient(mesh, &as_vector, e, q);
            observed = observed.max(g[0][0].hypot(g[0][1]));
        }
    }
    Ok(CutoffFamily {
        epsilon,
        inner,
        outer,
        theta,
        profile_gradient_bound: 1.0 / (outer - inner),
        observed_gradient: observed,
        gradient_constant: observed * epsilon,
    })
}
