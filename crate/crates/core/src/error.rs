use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function being evaluated.
    #[error("domain error: {what} (got {value})")]
    Domain { what: &'static str, value: f64 },

    /// Invalid model or run configuration. Carries every violation found.
    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),

    /// The implicit-Euler step violates the stability restriction.
    #[error("time step h = {h} violates h < phi_min * lambda / 2 = {threshold}")]
    StepRestriction { h: f64, threshold: f64 },

    /// Scalar root finder ran out of iterations. Carries the last bracket.
    #[error("root finder did not converge after {iterations} iterations, bracket [{lo}, {hi}]")]
    RootNotConverged { lo: f64, hi: f64, iterations: usize },

    /// A nonlinear or linear iteration exhausted its budget.
    #[error("{context}: no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    /// NaN/inf encountered, or a singular linear system.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Two fields on different grids were combined.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An internal identity failed to hold to its tolerance.
    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }
}

pub type Result<T> = std::result::Result<T, Error>;
