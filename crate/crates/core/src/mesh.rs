//! Structured triangulation of the unit square.
//!
//! The square `(0,1)^2` is divided into `N x N` cells and every cell is cut
//! along its lower-left to upper-right diagonal. Besides vertices and
//! triangles the mesh carries the edge topology needed by the RT0 element:
//! a global edge list, per-triangle local edges with orientation signs, and
//! the boundary edges tagged by the side of the square they lie on.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

/// A point or vector in the plane.
pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("number of divisions must be at least 1")]
    NoDivisions,
    #[error("triangle index {index} out of range (mesh has {count} triangles)")]
    TriangleOutOfRange { index: usize, count: usize },
    #[error("degenerate triangle with signed area {0}")]
    Degenerate(f64),
}

/// Side of the unit square an edge lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    /// `x = 0`
    Left,
    /// `x = 1`
    Right,
    /// `y = 0`
    Bottom,
    /// `y = 1`
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    /// Unit outward normal of the square on this side.
    pub fn outward_normal(self) -> Point {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Side::Left => "x0",
            Side::Right => "x1",
            Side::Bottom => "y0",
            Side::Top => "y1",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One local edge of a triangle: the global edge index and the orientation
/// sign, `+1` when the triangle's outward normal agrees with the global
/// edge normal and `-1` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEdge {
    pub edge: usize,
    pub sign: f64,
}

/// Affine data of a single triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleGeometry {
    pub vertices: [Point; 3],
    pub area: f64,
    /// Gradients of the three barycentric coordinates (constant on the triangle).
    pub bary_gradients: [Point; 3],
}

impl TriangleGeometry {
    pub fn new(vertices: [Point; 3]) -> Result<Self, MeshError> {
        let [a, b, c] = vertices;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        if det.abs() <= f64::EPSILON * 1e-3 || !det.is_finite() {
            return Err(MeshError::Degenerate(0.5 * det));
        }
        // grad(lambda_k) = rot(p_{k+2} - p_{k+1}) / (2 |T|), rot(x, y) = (y, -x)
        let mut grads = [[0.0; 2]; 3];
        for (k, g) in grads.iter_mut().enumerate() {
            let p1 = vertices[(k + 1) % 3];
            let p2 = vertices[(k + 2) % 3];
            *g = [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det];
        }
        Ok(Self {
            vertices,
            area: 0.5 * det.abs(),
            bary_gradients: grads,
        })
    }

    /// Physical point of the given barycentric coordinates.
    #[inline]
    pub fn point(&self, bary: [f64; 3]) -> Point {
        let [a, b, c] = self.vertices;
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }

    pub fn centroid(&self) -> Point {
        self.point([1.0 / 3.0; 3])
    }

    /// Length of the local edge opposite vertex `k`.
    pub fn edge_length(&self, k: usize) -> f64 {
        let p1 = self.vertices[(k + 1) % 3];
        let p2 = self.vertices[(k + 2) % 3];
        (p2[0] - p1[0]).hypot(p2[1] - p1[1])
    }

    /// Outward unit normal on the local edge opposite vertex `k`.
    pub fn outward_normal(&self, k: usize) -> Point {
        let g = self.bary_gradients[k];
        let len = g[0].hypot(g[1]);
        [-g[0] / len, -g[1] / len]
    }

    pub fn diameter(&self) -> f64 {
        (0..3).map(|k| self.edge_length(k)).fold(0.0, f64::max)
    }

    /// Radius of the inscribed circle.
    pub fn inradius(&self) -> f64 {
        let perimeter: f64 = (0..3).map(|k| self.edge_length(k)).sum();
        2.0 * self.area / perimeter
    }
}

/// Triangulation of the unit square.
///
/// Local edge `k` of a triangle is the edge opposite its vertex `k`.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    n_divisions: usize,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    tri_edges: Vec<[LocalEdge; 3]>,
    edge_triangles: Vec<[Option<usize>; 2]>,
    boundary_edges: Vec<(usize, Side)>,
    h: f64,
}

impl TriangleMesh {
    /// Builds the `2 N^2` triangle mesh of the unit square.
    pub fn unit_square(n: usize) -> Result<Self, MeshError> {
        if n == 0 {
            return Err(MeshError::NoDivisions);
        }
        let nv = n + 1;
        let step = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity(nv * nv);
        for j in 0..nv {
            for i in 0..nv {
                vertices.push([i as f64 * step, j as f64 * step]);
            }
        }

        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * nv + i;
                let v10 = v00 + 1;
                let v01 = v00 + nv;
                let v11 = v01 + 1;
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }

        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::with_capacity(3 * n * n + 2 * n);
        let mut edges = Vec::with_capacity(3 * n * n + 2 * n);
        let mut edge_triangles: Vec<[Option<usize>; 2]> = Vec::with_capacity(edges.capacity());
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local = [LocalEdge { edge: 0, sign: 0.0 }; 3];
            for (k, slot) in local.iter_mut().enumerate() {
                // counterclockwise traversal a -> b of the edge opposite vertex k
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = [a.min(b), a.max(b)];
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_triangles.push([None, None]);
                    edges.len() - 1
                });
                let owners = &mut edge_triangles[e];
                if owners[0].is_none() {
                    owners[0] = Some(t);
                } else {
                    owners[1] = Some(t);
                }
                // The global normal rotates the low->high tangent by +90 degrees, the
                // outward normal rotates the counterclockwise tangent by -90 degrees.
                let sign = if a > b { 1.0 } else { -1.0 };
                *slot = LocalEdge { edge: e, sign };
            }
            tri_edges.push(local);
        }

        let mut boundary_edges = Vec::with_capacity(4 * n);
        for (e, owners) in edge_triangles.iter().enumerate() {
            if owners[1].is_some() {
                continue;
            }
            let [a, b] = edges[e];
            let (pa, pb) = (vertices[a], vertices[b]);
            let side = if pa[0] == 0.0 && pb[0] == 0.0 {
                Side::Left
            } else if pa[0] == 1.0 && pb[0] == 1.0 {
                Side::Right
            } else if pa[1] == 0.0 && pb[1] == 0.0 {
                Side::Bottom
            } else {
                debug_assert!(pa[1] == 1.0 && pb[1] == 1.0);
                Side::Top
            };
            boundary_edges.push((e, side));
        }

        // Grid coordinates i * (1/N) are exact at 0 and 1 for every N.
        Ok(Self {
            n_divisions: n,
            vertices,
            triangles,
            edges,
            tri_edges,
            edge_triangles,
            boundary_edges,
            h: std::f64::consts::SQRT_2 / n as f64,
        })
    }

    pub fn n_divisions(&self) -> usize {
        self.n_divisions
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn tri_edges(&self) -> &[[LocalEdge; 3]] {
        &self.tri_edges
    }

    /// Triangles sharing each edge; the second slot is `None` on the boundary.
    pub fn edge_triangles(&self) -> &[[Option<usize>; 2]] {
        &self.edge_triangles
    }

    pub fn boundary_edges(&self) -> &[(usize, Side)] {
        &self.boundary_edges
    }

    /// Maximal element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn triangle_geometry(&self, t: usize) -> Result<TriangleGeometry, MeshError> {
        let tri = self.triangles.get(t).ok_or(MeshError::TriangleOutOfRange {
            index: t,
            count: self.triangles.len(),
        })?;
        TriangleGeometry::new(tri.map(|v| self.vertices[v]))
    }

    /// Geometry of every triangle, in triangle order.
    pub fn geometries(&self) -> Vec<TriangleGeometry> {
        (0..self.n_triangles())
            .map(|t| self.triangle_geometry(t).expect("mesh triangles are valid"))
            .collect()
    }

    pub fn boundary_edges_on_side(&self, side: Side) -> Vec<usize> {
        self.boundary_edges
            .iter()
            .filter(|(_, s)| *s == side)
            .map(|&(e, _)| e)
            .collect()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        (pb[0] - pa[0]).hypot(pb[1] - pa[1])
    }

    /// Global unit normal of an edge: the low-to-high tangent rotated by +90 degrees.
    pub fn edge_normal(&self, e: usize) -> Point {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let (tx, ty) = (pb[0] - pa[0], pb[1] - pa[1]);
        let len = tx.hypot(ty);
        [-ty / len, tx / len]
    }

    pub fn edge_midpoint(&self, e: usize) -> Point {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    }

    /// Writes the plain-text debugging dump: vertices, triangles, then edges
    /// with their boundary tag (`-` for interior edges).
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut tags = vec!["-"; self.n_edges()];
        for &(e, side) in &self.boundary_edges {
            tags[e] = side.tag();
        }
        writeln!(out, "vertices {}", self.n_vertices())?;
        for v in &self.vertices {
            writeln!(out, "{} {}", v[0], v[1])?;
        }
        writeln!(out, "triangles {}", self.n_triangles())?;
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(out, "edges {}", self.n_edges())?;
        for (e, [a, b]) in self.edges.iter().enumerate() {
            writeln!(out, "{} {} {}", a, b, tags[e])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_divisions() {
        assert_eq!(TriangleMesh::unit_square(0).unwrap_err(), MeshError::NoDivisions);
    }

    #[test]
    fn smallest_meshes() {
        let m = TriangleMesh::unit_square(1).unwrap();
        assert_eq!(
            (m.n_vertices(), m.n_triangles(), m.n_edges(), m.boundary_edges().len()),
            (4, 2, 5, 4)
        );
        let m = TriangleMesh::unit_square(2).unwrap();
        assert_eq!(
            (m.n_vertices(), m.n_triangles(), m.n_edges(), m.boundary_edges().len()),
            (9, 8, 16, 8)
        );
        assert_eq!(TriangleMesh::unit_square(60).unwrap().n_triangles(), 7200);
    }

    #[test]
    fn reference_triangle_geometry() {
        let g = TriangleGeometry::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(g.area, 0.5);
        assert_eq!(g.bary_gradients, [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn degenerate_triangle() {
        let err = TriangleGeometry::new([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).unwrap_err();
        assert!(matches!(err, MeshError::Degenerate(_)));
    }

    #[test]
    fn triangle_index_out_of_range() {
        let m = TriangleMesh::unit_square(1).unwrap();
        assert_eq!(
            m.triangle_geometry(2).unwrap_err(),
            MeshError::TriangleOutOfRange { index: 2, count: 2 }
        );
    }

    #[test]
    fn side_edges() {
        let m = TriangleMesh::unit_square(1).unwrap();
        let left = m.boundary_edges_on_side(Side::Left);
        assert_eq!(left.len(), 1);
        let [a, b] = m.edges()[left[0]];
        assert_eq!((m.vertices()[a], m.vertices()[b]), ([0.0, 0.0], [0.0, 1.0]));

        let m = TriangleMesh::unit_square(60).unwrap();
        let mut all: Vec<usize> = Side::ALL.iter().flat_map(|&s| m.boundary_edges_on_side(s)).collect();
        assert_eq!(all.len(), 240);
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 240);
    }

    #[test]
    fn outward_normal_sign_convention() {
        let m = TriangleMesh::unit_square(3).unwrap();
        for t in 0..m.n_triangles() {
            let g = m.triangle_geometry(t).unwrap();
            for (k, le) in m.tri_edges()[t].iter().enumerate() {
                let n_out = g.outward_normal(k);
                let n_glob = m.edge_normal(le.edge);
                let dot = n_out[0] * n_glob[0] + n_out[1] * n_glob[1];
                assert!((dot - le.sign).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dump_format() {
        let m = TriangleMesh::unit_square(1).unwrap();
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "vertices 4");
        assert_eq!(lines[5], "triangles 2");
        assert_eq!(lines[8], "edges 5");
        assert_eq!(lines.len(), 14);
        assert_eq!(text.matches(" x0").count(), 1);
    }
}
