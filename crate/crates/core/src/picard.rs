//! Relaxed Picard loop shared by both discretizations.

use std::time::Instant;

use thiserror::Error;

use crate::mesh::MeshError;
use crate::sparse::SparseError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("linear solve failed at Picard iteration {iteration}: {source}")]
    Solver {
        iteration: usize,
        #[source]
        source: SparseError,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] SparseError),
}

/// Outcome of one Picard run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationReport {
    /// Number of linear solves performed.
    pub iterations: usize,
    pub converged: bool,
    /// Relative increment after each solve.
    pub err_l_history: Vec<f64>,
    /// L2 norm of the velocity increment after each solve.
    pub velocity_increments: Vec<f64>,
    /// Relative error against the exact solution, when one is known.
    pub final_err: Option<f64>,
    /// Seconds spent in the loop.
    pub wall_time: f64,
}

/// Increment measures between two consecutive iterates.
#[derive(Debug, Clone, Copy)]
pub struct Increment {
    pub relative: f64,
    pub velocity: f64,
}

/// Relative combined increment
/// `sqrt((|du|^2 + |dp|^2) / (|u_new|^2 + |p_new|^2))`, from squared norms.
///
/// A zero denominator gives 0 when the states agree and `+inf` otherwise.
pub fn relative_increment(du2: f64, dp2: f64, u2: f64, p2: f64) -> f64 {
    let num = du2 + dp2;
    let den = u2 + p2;
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

/// Runs `state <- step(state)` until the relative increment drops to `tol`
/// or `max_iter` solves have been made. A NaN increment stops the loop as
/// not converged.
pub(crate) fn run<S>(
    init: S,
    tol: f64,
    max_iter: usize,
    mut step: impl FnMut(&S) -> Result<S, SparseError>,
    increment: impl Fn(&S, &S) -> Increment,
) -> Result<(S, IterationReport), SchemeError> {
    if !(tol > 0.0) {
        return Err(SchemeError::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if max_iter == 0 {
        return Err(SchemeError::InvalidParameter("max_iter must be at least 1".into()));
    }
    let start = Instant::now();
    let mut report = IterationReport::default();
    let mut state = init;
    for iteration in 1..=max_iter {
        let next = step(&state).map_err(|source| SchemeError::Solver { iteration, source })?;
        let inc = increment(&next, &state);
        report.iterations = iteration;
        report.err_l_history.push(inc.relative);
        report.velocity_increments.push(inc.velocity);
        state = next;
        if inc.relative <= tol {
            report.converged = true;
            break;
        }
        if inc.relative.is_nan() {
            break;
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((state, report))
}

pub(crate) fn check_parameters(mu: f64, rho: f64, beta: f64, alpha: f64, penalty_eps: f64) -> Result<(), SchemeError> {
    let bad = |what: &str, v: f64| Err(SchemeError::InvalidParameter(format!("{what} = {v}")));
    if !(mu > 0.0) {
        return bad("mu must be positive: mu", mu);
    }
    if !(rho > 0.0) {
        return bad("rho must be positive: rho", rho);
    }
    if !(beta >= 0.0) {
        return bad("beta must be nonnegative: beta", beta);
    }
    if !(alpha >= 0.0) {
        return bad("alpha must be nonnegative: alpha", alpha);
    }
    if !(penalty_eps > 0.0) {
        return bad("penalty must be positive: penalty_eps", penalty_eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinel_values() {
        assert_eq!(relative_increment(0.0, 0.0, 0.0, 0.0), 0.0);
        assert_eq!(relative_increment(1.0, 0.0, 0.0, 0.0), f64::INFINITY);
        assert_eq!(relative_increment(2.0, 2.0, 2.0, 2.0), 1.0);
    }

    #[test]
    fn scalar_contraction() {
        // x <- (x + 2/x) / 2 converges to sqrt(2)
        let (x, report) = run(
            1.0f64,
            1e-12,
            50,
            |&x| Ok((x + 2.0 / x) / 2.0),
            |a, b| Increment {
                relative: ((a - b) / a).abs(),
                velocity: (a - b).abs(),
            },
        )
        .unwrap();
        assert!(report.converged);
        assert!((x - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(report.err_l_history.len(), report.iterations);
    }

    #[test]
    fn cap_reached() {
        let (_, report) = run(
            0.0f64,
            1e-12,
            7,
            |&x| Ok(x + 1.0),
            |a, b| Increment {
                relative: (a - b).abs(),
                velocity: 0.0,
            },
        )
        .unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 7);
    }

    #[test]
    fn rejects_bad_controls() {
        let step = |x: &f64| Ok(*x);
        let inc = |_: &f64, _: &f64| Increment {
            relative: 0.0,
            velocity: 0.0,
        };
        assert!(run(0.0, 0.0, 5, step, inc).is_err());
        assert!(run(0.0, 1e-5, 0, step, inc).is_err());
    }
}
