//! Finite element solvers for the Darcy-Forchheimer equations
//!
//! ```text
//! (mu/rho) K^-1 u + (beta/rho) |u| u + grad p = f,   div u = b   in (0,1)^2
//! ```
//!
//! with either a normal-flux condition `u . n = g_u` (P0 velocity / P1
//! pressure, [`gradp`]) or a homogeneous pressure condition (RT0 velocity /
//! P0 pressure, [`mixed`]). Both discretizations are solved with a Picard
//! iteration relaxed by `alpha (u^{i+1} - u^i, v)`, and the saddle-point
//! systems are regularized with a small pressure penalty.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected too;
// element loops index several parallel arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cases;
pub mod experiments;
pub mod fem;
pub mod gradp;
pub mod mesh;
pub mod mixed;
pub mod picard;
pub mod quadrature;
pub mod sparse;

pub use cases::{keps_case, make_case, CaseName, ManufacturedCase, PermeabilityField};
pub use mesh::{Side, TriangleMesh};
pub use picard::{IterationReport, SchemeError};
