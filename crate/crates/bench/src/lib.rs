//! Shared fixtures for the criterion benchmarks.

use forchgas_core::transient::{TimeGrid, TransientSpec};
use forchgas_core::{ForchheimerPolynomial, GasModel, Provider, StaggeredGrid};

/// Three-term polynomial with a fractional middle exponent.
pub fn bench_polynomial() -> ForchheimerPolynomial {
    ForchheimerPolynomial::constant(&[0.0, 0.5, 1.0], &[1.0, 1.0, 1.0]).expect("valid polynomial")
}

/// One-dimensional transient problem with a sine initial state and a point-like source.
pub fn transient_spec(cells: usize) -> TransientSpec {
    let grid = StaggeredGrid::new_1d(1.0, cells).expect("valid grid");
    let u0 = Provider::new(|x, _| (std::f64::consts::PI * x[0]).sin());
    TransientSpec {
        grid,
        poly: bench_polynomial(),
        gas: GasModel::from_lambda(0.5).expect("valid lambda"),
        phi: grid.sample_cells(&Provider::constant(1.0), 0.0),
        f: Provider::new(|x, _| 5.0 * (-(x[0] - 0.3).powi(2) / 0.01).exp()),
        u0: grid.sample_cells(&u0, 0.0),
        time: TimeGrid::new(0.1, 20).expect("valid time grid"),
        lipschitz_l: None,
    }
}
