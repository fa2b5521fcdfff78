//! Quadrature on triangles (barycentric points, weights normalized to sum to 1)
//! and Gauss-Legendre rules on edges.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("no triangle quadrature rule of degree {0} (supported: 1, 2, 5)")]
pub struct UnsupportedDegree(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    degree: usize,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, [f64; 3])> + '_ {
        self.weights.iter().copied().zip(self.points.iter().copied())
    }
}

/// Returns the rule exact for polynomials up to `degree` on any triangle.
pub fn quadrature_rule(degree: usize) -> Result<QuadratureRule, UnsupportedDegree> {
    let third = 1.0 / 3.0;
    let (points, weights) = match degree {
        1 => (vec![[third; 3]], vec![1.0]),
        2 => {
            let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
            (vec![[b, a, a], [a, b, a], [a, a, b]], vec![third; 3])
        }
        5 => {
            // 7-point rule of Radon
            let s15 = 15f64.sqrt();
            let a1 = (6.0 - s15) / 21.0;
            let a2 = (6.0 + s15) / 21.0;
            let b1 = 1.0 - 2.0 * a1;
            let b2 = 1.0 - 2.0 * a2;
            let w1 = (155.0 - s15) / 1200.0;
            let w2 = (155.0 + s15) / 1200.0;
            (
                vec![
                    [third; 3],
                    [b1, a1, a1],
                    [a1, b1, a1],
                    [a1, a1, b1],
                    [b2, a2, a2],
                    [a2, b2, a2],
                    [a2, a2, b2],
                ],
                vec![9.0 / 40.0, w1, w1, w1, w2, w2, w2],
            )
        }
        d => return Err(UnsupportedDegree(d)),
    };
    Ok(QuadratureRule {
        degree,
        points,
        weights,
    })
}

/// Three-point Gauss-Legendre rule on `[0, 1]`: `(parameter, weight)` pairs,
/// weights summing to 1. Exact for polynomials of degree 5.
pub fn edge_gauss3() -> [(f64, f64); 3] {
    let d = 0.5 * (0.6f64).sqrt();
    [(0.5 - d, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + d, 5.0 / 18.0)]
}

/// Pairwise summation in index order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}
