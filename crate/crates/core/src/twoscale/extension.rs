//! Even-reflection extension of nodal fields beyond the rectangle.

use serde::Serialize;

use super::smoothing::GridField;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Clone, Debug)]
pub struct Extension {
    pub field: GridField,
    /// Padding in nodes on every side.
    pub pad: usize,
    pub stats: ExtensionStats,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExtensionStats {
    /// Discrete `H^2` surrogate of the extension over the padded box.
    pub padded_h2: f64,
    /// The same surrogate over the rectangle.
    pub interior_h2: f64,
    /// `padded_h2 / interior_h2`.
    pub c_ext: f64,
}

#[inline]
fn reflect(i: i64, n: i64) -> usize {
    if i < 0 {
        (-i) as usize
    } else if i > n {
        (2 * n - i) as usize
    } else {
        i as usize
    }
}

/// Extends the nodal vector field `u0` by `pad` nodes on every side,
/// mirroring node indices across each edge (and across both at corners).
pub fn extend(u0: &[f64], mesh: &Mesh, pad: usize) -> Result<Extension> {
    let (nx, ny) = (mesh.nx(), mesh.ny());
    if u0.len() != 2 * mesh.node_count() {
        return Err(Error::InvalidArgument(format!(
            "field has {} entries, mesh has {} nodes",
            u0.len(),
            mesh.node_count()
        )));
    }
    if pad > nx.min(ny) {
        return Err(Error::InvalidArgument(format!(
            "padding of {pad} nodes exceeds the mesh size {nx} x {ny}"
        )));
    }
    let p = pad as i64;
    let shape = [nx + 1 + 2 * pad, ny + 1 + 2 * pad];
    let origin = [
        mesh.domain().lower[0] - pad as f64 * mesh.hx(),
        mesh.domain().lower[1] - pad as f64 * mesh.hy(),
    ];
    let mut field = GridField::zeros(origin, [mesh.hx(), mesh.hy()], shape, 2);
    for j in 0..shape[1] {
        let sj = reflect(j as i64 - p, ny as i64);
        for i in 0..shape[0] {
            let si = reflect(i as i64 - p, nx as i64);
            let src = 2 * mesh.node_index(si, sj);
            let dst = 2 * (j * shape[0] + i);
            field.values[dst] = u0[src];
            field.values[dst + 1] = u0[src + 1];
        }
    }
    let padded_h2 = discrete_h2_norm(&field);
    let interior_h2 = discrete_h2_norm(&GridField::from_mesh(mesh, u0, 2));
    let c_ext = if interior_h2 > 0.0 { padded_h2 / interior_h2 } else { 1.0 };
    Ok(Extension {
        field,
        pad,
        stats: ExtensionStats {
            padded_h2,
            interior_h2,
            c_ext,
        },
    })
}

/// `(|u|^2 + |D u|^2 + |D^2 u|^2)^{1/2}` with difference quotients: one-sided
/// first differences, centered second differences at interior nodes, and the
/// cell-centered mixed difference.
pub fn discrete_h2_norm(u: &GridField) -> f64 {
    let [hx, hy] = u.h;
    let [sx, sy] = u.shape;
    let mut second = 0.0;
    for c in 0..u.comps {
        for j in 0..sy {
            for i in 0..sx {
                let v = u.get(i, j, c);
                if i > 0 && i + 1 < sx {
                    second += ((u.get(i + 1, j, c) - 2.0 * v + u.get(i - 1, j, c)) / (hx * hx)).powi(2);
                }
                if j > 0 && j + 1 < sy {
                    second += ((u.get(i, j + 1, c) - 2.0 * v + u.get(i, j - 1, c)) / (hy * hy)).powi(2);
                }
                if i + 1 < sx && j + 1 < sy {
                    let m = (u.get(i + 1, j + 1, c) - u.get(i + 1, j, c) - u.get(i, j + 1, c) + v) / (hx * hy);
                    second += 2.0 * m * m;
                }
            }
        }
    }
    let l2 = u.l2_norm();
    let g = u.gradient_norm();
    (l2 * l2 + g * g + hx * hy * second).sqrt()
}
