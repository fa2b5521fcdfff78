#![allow(dead_code, clippy::needless_range_loop)]

use forchheimer::mesh::TriangleGeometry;

/// Gaussian elimination with partial pivoting on a dense copy.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f != 0.0 {
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Integrates `f` over a triangle by splitting it into `m^2` congruent
/// pieces and applying the edge-midpoint rule on each (exact for quadratics).
pub fn subdivided_integral(g: &TriangleGeometry, m: usize, f: impl Fn([f64; 2]) -> f64) -> f64 {
    let [a, b, c] = g.vertices;
    let at = |i: f64, j: f64| {
        let (s, t) = (i / m as f64, j / m as f64);
        [
            a[0] + s * (b[0] - a[0]) + t * (c[0] - a[0]),
            a[1] + s * (b[1] - a[1]) + t * (c[1] - a[1]),
        ]
    };
    let piece = |p: [[f64; 2]; 3]| {
        let mid = |u: [f64; 2], v: [f64; 2]| [(u[0] + v[0]) / 2.0, (u[1] + v[1]) / 2.0];
        (f(mid(p[0], p[1])) + f(mid(p[1], p[2])) + f(mid(p[2], p[0]))) / 3.0
    };
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m - i {
            let (fi, fj) = (i as f64, j as f64);
            total += piece([at(fi, fj), at(fi + 1.0, fj), at(fi, fj + 1.0)]);
            if i + j + 1 < m {
                total += piece([at(fi + 1.0, fj), at(fi + 1.0, fj + 1.0), at(fi, fj + 1.0)]);
            }
        }
    }
    total * g.area / (m * m) as f64
}
