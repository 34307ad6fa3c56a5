//! Space-time scalar providers used for coefficients, porosity, sources and
//! boundary traces.
//!
//! Providers must be side-effect free: they are evaluated lazily at cell
//! centers and face midpoints, possibly from several threads.

use std::fmt;
use std::sync::Arc;

/// A point in the computational domain. One-dimensional grids leave the
/// second coordinate at zero.
pub type Point = [f64; 2];

type ScalarFn = dyn Fn(Point, f64) -> f64 + Send + Sync;

/// A scalar function of position and time.
#[derive(Clone)]
pub enum Provider {
    Constant(f64),
    Function(Arc<ScalarFn>),
}

impl Provider {
    pub fn constant(value: f64) -> Self {
        Provider::Constant(value)
    }

    pub fn new<F>(f: F) -> Self
    where
        F: Fn(Point, f64) -> f64 + Send + Sync + 'static,
    {
        Provider::Function(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: Point, t: f64) -> f64 {
        match self {
            Provider::Constant(v) => *v,
            Provider::Function(f) => f(x, t),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Provider::Constant(v) => Some(*v),
            Provider::Function(_) => None,
        }
    }
}

impl fmt::Debug for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provider::Constant(v) => write!(f, "Constant({v})"),
            Provider::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl From<f64> for Provider {
    fn from(v: f64) -> Self {
        Provider::Constant(v)
    }
}
