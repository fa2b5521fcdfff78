//! Discrete fields, the lowest-order Raviart-Thomas basis and L2 norms.

use crate::mesh::{MeshError, Point, TriangleGeometry, TriangleMesh};
use crate::quadrature::{edge_gauss3, pairwise_sum, QuadratureRule};

/// Piecewise-constant vector field, one value per triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct P0VectorField(pub Vec<[f64; 2]>);

/// Continuous piecewise-linear scalar field, one value per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct P1ScalarField(pub Vec<f64>);

/// Lowest-order Raviart-Thomas field. Each coefficient is the normal
/// component `u . n_e` on its edge (constant along the edge), measured
/// against the global edge normal.
#[derive(Debug, Clone, PartialEq)]
pub struct RT0Field(pub Vec<f64>);

/// Piecewise-constant scalar field, one value per triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct P0ScalarField(pub Vec<f64>);

/// Value type of a discrete field: a scalar or a 2-vector.
pub trait FieldValue: Copy {
    fn squared_distance(self, other: Self) -> f64;
    fn zero() -> Self;
}

impl FieldValue for f64 {
    #[inline]
    fn squared_distance(self, other: Self) -> f64 {
        (self - other) * (self - other)
    }

    fn zero() -> Self {
        0.0
    }
}

impl FieldValue for [f64; 2] {
    #[inline]
    fn squared_distance(self, other: Self) -> f64 {
        let (dx, dy) = (self[0] - other[0], self[1] - other[1]);
        dx * dx + dy * dy
    }

    fn zero() -> Self {
        [0.0; 2]
    }
}

/// A finite element field that can be evaluated inside any triangle.
pub trait DiscreteField {
    type Value: FieldValue;

    /// Number of coefficients the field must have on `mesh`.
    fn expected_len(mesh: &TriangleMesh) -> usize;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn eval_in(&self, mesh: &TriangleMesh, t: usize, geometry: &TriangleGeometry, bary: [f64; 3]) -> Self::Value;
}

impl DiscreteField for P0VectorField {
    type Value = [f64; 2];

    fn expected_len(mesh: &TriangleMesh) -> usize {
        mesh.n_triangles()
    }

    fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    fn eval_in(&self, _: &TriangleMesh, t: usize, _: &TriangleGeometry, _: [f64; 3]) -> [f64; 2] {
        self.0[t]
    }
}

impl DiscreteField for P1ScalarField {
    type Value = f64;

    fn expected_len(mesh: &TriangleMesh) -> usize {
        mesh.n_vertices()
    }

    fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    fn eval_in(&self, mesh: &TriangleMesh, t: usize, _: &TriangleGeometry, bary: [f64; 3]) -> f64 {
        let tri = mesh.triangles()[t];
        bary[0] * self.0[tri[0]] + bary[1] * self.0[tri[1]] + bary[2] * self.0[tri[2]]
    }
}

impl DiscreteField for RT0Field {
    type Value = [f64; 2];

    fn expected_len(mesh: &TriangleMesh) -> usize {
        mesh.n_edges()
    }

    fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    fn eval_in(&self, mesh: &TriangleMesh, t: usize, geometry: &TriangleGeometry, bary: [f64; 3]) -> [f64; 2] {
        let x = geometry.point(bary);
        let mut v = [0.0; 2];
        for (k, le) in mesh.tri_edges()[t].iter().enumerate() {
            let phi = rt0_shape(geometry, k, le.sign, x);
            let c = self.0[le.edge];
            v[0] += c * phi[0];
            v[1] += c * phi[1];
        }
        v
    }
}

impl DiscreteField for P0ScalarField {
    type Value = f64;

    fn expected_len(mesh: &TriangleMesh) -> usize {
        mesh.n_triangles()
    }

    fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    fn eval_in(&self, _: &TriangleMesh, t: usize, _: &TriangleGeometry, _: [f64; 3]) -> f64 {
        self.0[t]
    }
}

impl P0VectorField {
    pub fn zeros(mesh: &TriangleMesh) -> Self {
        Self(vec![[0.0; 2]; mesh.n_triangles()])
    }

    /// Samples `f` at triangle centroids.
    pub fn centroid_interpolant(mesh: &TriangleMesh, f: impl Fn(Point) -> [f64; 2]) -> Self {
        Self(mesh.geometries().iter().map(|g| f(g.centroid())).collect())
    }
}

impl P1ScalarField {
    pub fn zeros(mesh: &TriangleMesh) -> Self {
        Self(vec![0.0; mesh.n_vertices()])
    }

    pub fn nodal_interpolant(mesh: &TriangleMesh, f: impl Fn(Point) -> f64) -> Self {
        Self(mesh.vertices().iter().map(|&v| f(v)).collect())
    }
}

impl RT0Field {
    pub fn zeros(mesh: &TriangleMesh) -> Self {
        Self(vec![0.0; mesh.n_edges()])
    }

    /// Canonical interpolant: each coefficient is the mean of `f . n_e` over
    /// the edge (three-point Gauss).
    pub fn interpolant(mesh: &TriangleMesh, f: impl Fn(Point) -> [f64; 2]) -> Self {
        let coeffs = (0..mesh.n_edges())
            .map(|e| {
                let [a, b] = mesh.edges()[e];
                let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
                let n = mesh.edge_normal(e);
                edge_gauss3()
                    .iter()
                    .map(|&(s, w)| {
                        let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                        let v = f(x);
                        w * (v[0] * n[0] + v[1] * n[1])
                    })
                    .sum()
            })
            .collect();
        Self(coeffs)
    }

    /// Elementwise divergence.
    pub fn divergence(&self, mesh: &TriangleMesh) -> P0ScalarField {
        let values = mesh
            .geometries()
            .iter()
            .zip(mesh.tri_edges())
            .map(|(g, local)| {
                local
                    .iter()
                    .enumerate()
                    .map(|(k, le)| self.0[le.edge] * rt0_shape_divergence(g, k, le.sign))
                    .sum()
            })
            .collect();
        P0ScalarField(values)
    }
}

impl P0ScalarField {
    pub fn zeros(mesh: &TriangleMesh) -> Self {
        Self(vec![0.0; mesh.n_triangles()])
    }

    /// Elementwise mean of `f`, computed with `rule`.
    pub fn mean_interpolant(mesh: &TriangleMesh, f: impl Fn(Point) -> f64, rule: &QuadratureRule) -> Self {
        Self(
            mesh.geometries()
                .iter()
                .map(|g| rule.iter().map(|(w, l)| w * f(g.point(l))).sum())
                .collect(),
        )
    }
}

/// RT0 shape function of local edge `k` at the physical point `x`:
/// `sign * |e| / (2|T|) * (x - p_k)`, with `p_k` the vertex opposite the edge.
#[inline]
pub(crate) fn rt0_shape(g: &TriangleGeometry, k: usize, sign: f64, x: Point) -> Point {
    let p = g.vertices[k];
    let s = sign * g.edge_length(k) / (2.0 * g.area);
    [s * (x[0] - p[0]), s * (x[1] - p[1])]
}

#[inline]
pub(crate) fn rt0_shape_divergence(g: &TriangleGeometry, k: usize, sign: f64) -> f64 {
    sign * g.edge_length(k) / g.area
}

/// Value of the RT0 basis function of local edge `local_edge` (the edge
/// opposite that vertex), oriented by `sign`, at barycentric point `bary`.
pub fn rt0_basis_eval(
    geometry: &TriangleGeometry,
    local_edge: usize,
    sign: f64,
    bary: [f64; 3],
) -> Result<Point, MeshError> {
    if !(geometry.area > 0.0) {
        return Err(MeshError::Degenerate(geometry.area));
    }
    Ok(rt0_shape(geometry, local_edge, sign, geometry.point(bary)))
}

/// Divergence of the same basis function (constant on the triangle).
pub fn rt0_basis_divergence(geometry: &TriangleGeometry, local_edge: usize, sign: f64) -> Result<f64, MeshError> {
    if !(geometry.area > 0.0) {
        return Err(MeshError::Degenerate(geometry.area));
    }
    Ok(rt0_shape_divergence(geometry, local_edge, sign))
}

/// Evaluates an RT0 field inside triangle `t`.
pub fn eval_rt0(mesh: &TriangleMesh, field: &RT0Field, t: usize, bary: [f64; 3]) -> Result<Point, MeshError> {
    let g = mesh.triangle_geometry(t)?;
    Ok(field.eval_in(mesh, t, &g, bary))
}

/// `|x|^q x`, the scalar drag nonlinearity.
pub fn signed_power(x: f64, q: f64) -> f64 {
    x.abs().powf(q) * x
}

fn squared_l2_distance<F: DiscreteField>(
    mesh: &TriangleMesh,
    field: &F,
    exact: impl Fn(Point) -> F::Value,
    rule: &QuadratureRule,
) -> f64 {
    assert_eq!(field.len(), F::expected_len(mesh), "field size does not match the mesh");
    let contributions: Vec<f64> = (0..mesh.n_triangles())
        .map(|t| {
            let g = mesh.triangle_geometry(t).expect("mesh triangles are valid");
            let local: f64 = rule
                .iter()
                .map(|(w, l)| w * field.eval_in(mesh, t, &g, l).squared_distance(exact(g.point(l))))
                .sum();
            local * g.area
        })
        .collect();
    pairwise_sum(&contributions)
}

/// L2 norm of a discrete field.
///
/// # Panics
/// If the field size does not match the mesh.
pub fn l2_norm<F: DiscreteField>(mesh: &TriangleMesh, field: &F, rule: &QuadratureRule) -> f64 {
    squared_l2_distance(mesh, field, |_| F::Value::zero(), rule).sqrt()
}

/// L2 distance between a discrete field and an analytic function.
pub fn l2_error_vs_exact<F: DiscreteField>(
    mesh: &TriangleMesh,
    field: &F,
    exact: impl Fn(Point) -> F::Value,
    rule: &QuadratureRule,
) -> f64 {
    squared_l2_distance(mesh, field, exact, rule).sqrt()
}

/// L2 norm of an analytic function over the unit square.
pub fn l2_norm_exact<V: FieldValue>(mesh: &TriangleMesh, f: impl Fn(Point) -> V, rule: &QuadratureRule) -> f64 {
    integrate(mesh, |x| f(x).squared_distance(V::zero()), rule).sqrt()
}

/// Integral of `f` over the meshed domain.
pub fn integrate(mesh: &TriangleMesh, f: impl Fn(Point) -> f64, rule: &QuadratureRule) -> f64 {
    let contributions: Vec<f64> = mesh
        .geometries()
        .iter()
        .map(|g| g.area * rule.iter().map(|(w, l)| w * f(g.point(l))).sum::<f64>())
        .collect();
    pairwise_sum(&contributions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::quadrature_rule;

    fn reference() -> TriangleGeometry {
        TriangleGeometry::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap()
    }

    fn dot(a: Point, b: Point) -> f64 {
        a[0] * b[0] + a[1] * b[1]
    }

    #[test]
    fn rt0_duality_on_reference_triangle() {
        let g = reference();
        for k in 0..3 {
            for j in 0..3 {
                // mean normal component over edge j
                let p1 = g.vertices[(j + 1) % 3];
                let p2 = g.vertices[(j + 2) % 3];
                let n = g.outward_normal(j);
                let mean: f64 = edge_gauss3()
                    .iter()
                    .map(|&(s, w)| {
                        let x = [p1[0] + s * (p2[0] - p1[0]), p1[1] + s * (p2[1] - p1[1])];
                        w * dot(rt0_shape(&g, k, 1.0, x), n)
                    })
                    .sum();
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!((mean - expected).abs() < 1e-14, "k={k} j={j}: {mean}");
            }
        }
    }

    #[test]
    fn rt0_divergence_matches_closed_form() {
        let g = TriangleGeometry::new([[0.1, 0.2], [0.7, 0.25], [0.3, 0.9]]).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            for sign in [1.0, -1.0] {
                let x = g.centroid();
                let fx = |dx: f64, dy: f64| rt0_shape(&g, k, sign, [x[0] + dx, x[1] + dy]);
                let div = (fx(h, 0.0)[0] - fx(-h, 0.0)[0]) / (2.0 * h) + (fx(0.0, h)[1] - fx(0.0, -h)[1]) / (2.0 * h);
                let closed = rt0_basis_divergence(&g, k, sign).unwrap();
                assert!((div - closed).abs() < 1e-8);
                assert!((closed - sign * g.edge_length(k) / g.area).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn degenerate_geometry_rejected() {
        let mut g = reference();
        g.area = 0.0;
        assert!(rt0_basis_eval(&g, 0, 1.0, [1.0 / 3.0; 3]).is_err());
    }

    #[test]
    fn zero_and_unit_rt0_fields() {
        let mesh = TriangleMesh::unit_square(2).unwrap();
        let zero = RT0Field::zeros(&mesh);
        assert_eq!(eval_rt0(&mesh, &zero, 3, [0.2, 0.3, 0.5]).unwrap(), [0.0, 0.0]);

        let t = 5;
        let le = mesh.tri_edges()[t][1];
        let mut unit = RT0Field::zeros(&mesh);
        unit.0[le.edge] = 1.0;
        let g = mesh.triangle_geometry(t).unwrap();
        let bary = [0.2, 0.3, 0.5];
        assert_eq!(
            eval_rt0(&mesh, &unit, t, bary).unwrap(),
            rt0_basis_eval(&g, 1, le.sign, bary).unwrap()
        );
    }

    #[test]
    fn rt0_reproduces_constants() {
        let mesh = TriangleMesh::unit_square(3).unwrap();
        let c = [0.7, -1.3];
        let field = RT0Field::interpolant(&mesh, |_| c);
        let rule = quadrature_rule(5).unwrap();
        for t in 0..mesh.n_triangles() {
            for &l in rule.points() {
                let v = eval_rt0(&mesh, &field, t, l).unwrap();
                assert!((v[0] - c[0]).abs() < 1e-13 && (v[1] - c[1]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn simple_norms() {
        let mesh = TriangleMesh::unit_square(2).unwrap();
        let rule = quadrature_rule(5).unwrap();
        assert_eq!(l2_norm(&mesh, &P0VectorField::zeros(&mesh), &rule), 0.0);
        let ones = P0ScalarField(vec![1.0; mesh.n_triangles()]);
        assert!((l2_norm(&mesh, &ones, &rule) - 1.0).abs() < 1e-14);
        let x = P1ScalarField::nodal_interpolant(&mesh, |p| p[0]);
        assert!((l2_norm(&mesh, &x, &rule) - (1.0f64 / 3.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn errors_against_exact() {
        let mesh = TriangleMesh::unit_square(4).unwrap();
        let rule = quadrature_rule(5).unwrap();
        let f = |p: Point| 2.0 * p[0] - p[1] + 0.5;
        let interp = P1ScalarField::nodal_interpolant(&mesh, f);
        assert!(l2_error_vs_exact(&mesh, &interp, f, &rule) < 1e-12);
        let zero = P0ScalarField::zeros(&mesh);
        assert!((l2_error_vs_exact(&mesh, &zero, |_| 1.0, &rule) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn monotone_drag_samples() {
        for &(x, y, q) in &[(1.0, -2.0, 1.0), (0.3, 0.2, 0.5), (-4.0, -4.5, 2.0)] {
            assert!((signed_power(x, q) - signed_power(y, q)) * (x - y) >= 0.0);
        }
    }
}
