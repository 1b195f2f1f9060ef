//! Uniform quadrilateral meshes of axis-aligned rectangles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl DomainSpec {
    pub fn new(lower: [f64; 2], upper: [f64; 2]) -> Result<Self> {
        let d = Self { lower, upper };
        d.validate()?;
        Ok(d)
    }

    pub fn unit_square() -> Self {
        Self {
            lower: [0.0, 0.0],
            upper: [1.0, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for k in 0..2 {
            let len = self.upper[k] - self.lower[k];
            if !(len > 0.0) || !len.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "domain side {k} has non-positive length {len}"
                )));
            }
        }
        Ok(())
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn area(&self) -> f64 {
        self.length(0) * self.length(1)
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.length(0) + self.length(1))
    }

    pub fn centroid(&self) -> [f64; 2] {
        [
            0.5 * (self.lower[0] + self.upper[0]),
            0.5 * (self.lower[1] + self.upper[1]),
        ]
    }

    /// Distance from `x` to the boundary, for `x` inside the rectangle.
    pub fn boundary_distance(&self, x: [f64; 2]) -> f64 {
        (x[0] - self.lower[0])
            .min(self.upper[0] - x[0])
            .min(x[1] - self.lower[1])
            .min(self.upper[1] - x[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];

    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Edge::Left => [-1.0, 0.0],
            Edge::Right => [1.0, 0.0],
            Edge::Bottom => [0.0, -1.0],
            Edge::Top => [0.0, 1.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Edge::Left => "left",
            Edge::Right => "right",
            Edge::Bottom => "bottom",
            Edge::Top => "top",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "left" => Ok(Edge::Left),
            "right" => Ok(Edge::Right),
            "bottom" => Ok(Edge::Bottom),
            "top" => Ok(Edge::Top),
            other => Err(Error::InvalidArgument(format!("unknown edge {other:?}"))),
        }
    }
}

/// Whole-edge split of the boundary into the closed Dirichlet part and the
/// Neumann remainder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryPartition {
    dirichlet: Vec<Edge>,
    pure_neumann: bool,
}

impl BoundaryPartition {
    pub fn mixed(edges: &[Edge]) -> Result<Self> {
        let mut dirichlet = edges.to_vec();
        dirichlet.sort();
        dirichlet.dedup();
        if dirichlet.is_empty() {
            return Err(Error::IllPosed(
                "a mixed problem needs at least one Dirichlet edge".into(),
            ));
        }
        Ok(Self {
            dirichlet,
            pure_neumann: false,
        })
    }

    pub fn dirichlet_all() -> Self {
        Self {
            dirichlet: Edge::ALL.to_vec(),
            pure_neumann: false,
        }
    }

    pub fn pure_neumann() -> Self {
        Self {
            dirichlet: Vec::new(),
            pure_neumann: true,
        }
    }

    pub fn dirichlet_edges(&self) -> &[Edge] {
        &self.dirichlet
    }

    pub fn neumann_edges(&self) -> Vec<Edge> {
        Edge::ALL.into_iter().filter(|e| !self.is_dirichlet(*e)).collect()
    }

    pub fn is_dirichlet(&self, edge: Edge) -> bool {
        self.dirichlet.contains(&edge)
    }

    pub fn is_pure_neumann(&self) -> bool {
        self.pure_neumann
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NodeTag {
    Interior,
    Dirichlet,
    Neumann,
}

/// Uniform grid of `nx * ny` bilinear elements. Node `(ix, iy)` has index
/// `iy * (nx + 1) + ix`; element `(ex, ey)` has index `ey * nx + ex`.
#[derive(Clone, Debug)]
pub struct Mesh {
    domain: DomainSpec,
    partition: BoundaryPartition,
    nx: usize,
    ny: usize,
    tags: Vec<NodeTag>,
}

/// Number of mesh cells of size `h` along `length`, if `h` divides it.
pub fn cells_along(length: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("mesh size must be positive, got {h}")));
    }
    let ratio = length / h;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::NonconformingMeshSize { h, length });
    }
    Ok(n as usize)
}

pub fn build_mesh(domain: DomainSpec, partition: BoundaryPartition, h: f64) -> Result<Mesh> {
    domain.validate()?;
    let nx = cells_along(domain.length(0), h)?;
    let ny = cells_along(domain.length(1), h)?;
    Mesh::from_counts(domain, partition, nx, ny)
}

impl Mesh {
    pub fn from_counts(domain: DomainSpec, partition: BoundaryPartition, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument("mesh needs at least one element per side".into()));
        }
        let mut tags = vec![NodeTag::Interior; (nx + 1) * (ny + 1)];
        for iy in 0..=ny {
            for ix in 0..=nx {
                let edges = node_edges(ix, iy, nx, ny);
                if edges.is_empty() {
                    continue;
                }
                let tag = if edges.iter().any(|e| partition.is_dirichlet(*e)) {
                    NodeTag::Dirichlet
                } else {
                    NodeTag::Neumann
                };
                tags[iy * (nx + 1) + ix] = tag;
            }
        }
        Ok(Self {
            domain,
            partition,
            nx,
            ny,
            tags,
        })
    }

    /// The same rectangle with every element split `factor x factor` times.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::from_counts(self.domain, self.partition.clone(), self.nx * factor, self.ny * factor)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn partition(&self) -> &BoundaryPartition {
        &self.partition
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.domain.length(0) / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.domain.length(1) / self.ny as f64
    }

    /// Mesh size, the larger of the two spacings.
    pub fn h(&self) -> f64 {
        self.hx().max(self.hy())
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn element_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        iy * (self.nx + 1) + ix
    }

    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        (node % (self.nx + 1), node / (self.nx + 1))
    }

    pub fn node_coord(&self, node: usize) -> [f64; 2] {
        let (ix, iy) = self.node_ij(node);
        self.grid_point(ix as f64, iy as f64)
    }

    /// Point at fractional grid coordinates.
    #[inline]
    pub fn grid_point(&self, ix: f64, iy: f64) -> [f64; 2] {
        [
            self.domain.lower[0] + ix * self.hx(),
            self.domain.lower[1] + iy * self.hy(),
        ]
    }

    /// Corner nodes of element `e` in the order (0,0), (1,0), (0,1), (1,1).
    #[inline]
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (ex, ey) = (e % self.nx, e / self.nx);
        let n0 = ey * (self.nx + 1) + ex;
        [n0, n0 + 1, n0 + self.nx + 1, n0 + self.nx + 2]
    }

    pub fn element_centroid(&self, e: usize) -> [f64; 2] {
        let (ex, ey) = (e % self.nx, e / self.nx);
        self.grid_point(ex as f64 + 0.5, ey as f64 + 0.5)
    }

    pub fn tag(&self, node: usize) -> NodeTag {
        self.tags[node]
    }

    pub fn tags(&self) -> &[NodeTag] {
        &self.tags
    }

    pub fn is_dirichlet_node(&self, node: usize) -> bool {
        self.tags[node] == NodeTag::Dirichlet
    }

    /// Boundary segments of `edge` as pairs of node indices, in increasing order.
    pub fn edge_segments(&self, edge: Edge) -> Vec<(usize, usize)> {
        let (nx, ny) = (self.nx, self.ny);
        match edge {
            Edge::Bottom => (0..nx).map(|i| (self.node_index(i, 0), self.node_index(i + 1, 0))).collect(),
            Edge::Top => (0..nx).map(|i| (self.node_index(i, ny), self.node_index(i + 1, ny))).collect(),
            Edge::Left => (0..ny).map(|j| (self.node_index(0, j), self.node_index(0, j + 1))).collect(),
            Edge::Right => (0..ny).map(|j| (self.node_index(nx, j), self.node_index(nx, j + 1))).collect(),
        }
    }
}

fn node_edges(ix: usize, iy: usize, nx: usize, ny: usize) -> Vec<Edge> {
    let mut out = Vec::new();
    if ix == 0 {
        out.push(Edge::Left);
    }
    if ix == nx {
        out.push(Edge::Right);
    }
    if iy == 0 {
        out.push(Edge::Bottom);
    }
    if iy == ny {
        out.push(Edge::Top);
    }
    out
}

#[derive(Clone, Debug)]
pub struct DistanceField {
    pub delta: Vec<f64>,
}

pub fn distance_field(mesh: &Mesh) -> DistanceField {
    let (nx, ny) = (mesh.nx, mesh.ny);
    let delta = (0..mesh.node_count())
        .map(|node| {
            let (ix, iy) = mesh.node_ij(node);
            if ix == 0 || iy == 0 || ix == nx || iy == ny {
                0.0
            } else {
                mesh.domain.boundary_distance(mesh.node_coord(node))
            }
        })
        .collect();
    DistanceField { delta }
}

/// Elements whose centroid lies closer than `width` to the boundary.
pub fn layer_elements(mesh: &Mesh, width: f64) -> Vec<usize> {
    (0..mesh.element_count())
        .filter(|&e| mesh.domain.boundary_distance(mesh.element_centroid(e)) < width)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let m = build_mesh(DomainSpec::unit_square(), BoundaryPartition::dirichlet_all(), 0.25).unwrap();
        assert_eq!((m.node_count(), m.element_count()), (25, 16));
        let r = DomainSpec::new([0.0, 0.0], [2.0, 1.0]).unwrap();
        let m = build_mesh(r, BoundaryPartition::dirichlet_all(), 0.5).unwrap();
        assert_eq!((m.node_count(), m.element_count()), (15, 8));
        assert!(matches!(
            build_mesh(DomainSpec::unit_square(), BoundaryPartition::dirichlet_all(), 0.3),
            Err(Error::NonconformingMeshSize { .. })
        ));
    }

    #[test]
    fn corners_on_dirichlet_edges_are_dirichlet() {
        let p = BoundaryPartition::mixed(&[Edge::Left]).unwrap();
        let m = build_mesh(DomainSpec::unit_square(), p, 0.25).unwrap();
        assert_eq!(m.tag(m.node_index(0, 0)), NodeTag::Dirichlet);
        assert_eq!(m.tag(m.node_index(0, 4)), NodeTag::Dirichlet);
        assert_eq!(m.tag(m.node_index(4, 0)), NodeTag::Neumann);
        assert_eq!(m.tag(m.node_index(2, 2)), NodeTag::Interior);
        assert!(BoundaryPartition::mixed(&[]).is_err());
    }

    #[test]
    fn distances() {
        let m = build_mesh(DomainSpec::unit_square(), BoundaryPartition::dirichlet_all(), 0.25).unwrap();
        let d = distance_field(&m);
        assert_eq!(d.delta[m.node_index(2, 2)], 0.5);
        assert_eq!(d.delta[m.node_index(1, 2)], 0.25);
        assert_eq!(d.delta[m.node_index(4, 1)], 0.0);
    }

    #[test]
    fn layer_of_two_rings() {
        let m = build_mesh(DomainSpec::unit_square(), BoundaryPartition::dirichlet_all(), 1.0 / 16.0).unwrap();
        assert_eq!(layer_elements(&m, 2.0 / 16.0).len(), 256 - 144);
        assert_eq!(layer_elements(&m, 1.0 / 32.0 + 1e-9).len(), 256 - 196);
        assert!(layer_elements(&m, 1.0 / 64.0).is_empty());
        assert_eq!(layer_elements(&m, 0.5).len(), 256);
    }
}
