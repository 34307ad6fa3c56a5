//! Numerics for generalized Forchheimer flows of isentropic gas in porous
//! media.
//!
//! The flow is the first-order system
//!
//! ```text
//! F(x, t, |m|) m = -grad u,        phi d_t u^lambda + div m = f,
//! ```
//!
//! with `F` a generalized polynomial in `|m|`, `u` the pseudo-pressure and
//! `lambda = 1 / (gamma + 1)`. The crate provides the pointwise model
//! ([`model`]), randomized checks of the structural inequalities
//! ([`inequalities`]), a staggered finite-volume grid ([`grid`]), monotone
//! nonlinear solvers ([`solver`]), the stationary ε-continuation
//! ([`stationary`]), the implicit-Euler march ([`transient`]) and a
//! manufactured-solution harness ([`verification`]).

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod inequalities;
pub mod linalg;
pub mod mixed;
pub mod model;
pub mod provider;
pub mod solver;
pub mod stationary;
pub mod transient;
pub mod verification;

pub use error::{Error, Result};
pub use grid::{BoundaryData, CellField, FaceField, FieldState, Side, StaggeredGrid};
pub use model::{
    derive_exponents, DerivedExponents, ForchheimerPolynomial, GasModel, LocalPolynomial,
};
pub use provider::{Point, Provider};
pub use solver::{LinearSolver, SolveDiagnostics, SolverConfig};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
