use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use forchgas_bench::{bench_polynomial, transient_spec};
use forchgas_core::inequalities::{run_randomized_suite, SuiteConfig};
use forchgas_core::stationary::solve_stationary;
use forchgas_core::transient::step;
use forchgas_core::verification::stationary_regression_problems;
use forchgas_core::SolverConfig;

fn inversion(c: &mut Criterion) {
    let local = bench_polynomial()
        .at([0.5, 0.0], 0.0)
        .expect("finite coefficients");
    let xis: Vec<f64> = (0..64)
        .map(|k| 10f64.powf(-3.0 + 9.0 * k as f64 / 63.0))
        .collect();
    c.bench_function("invert_calf/64 values", |b| {
        b.iter(|| {
            for &xi in &xis {
                black_box(local.invert_calf(black_box(xi)).expect("invertible"));
            }
        })
    });
    c.bench_function("conductivity_with_derivative/64 values", |b| {
        b.iter(|| {
            for &xi in &xis {
                black_box(
                    local
                        .conductivity_with_derivative(black_box(xi))
                        .expect("invertible"),
                );
            }
        })
    });
}

fn transient_step(c: &mut Criterion) {
    let cfg = SolverConfig::default();
    let mut group = c.benchmark_group("transient_step");
    for cells in [32, 128, 512] {
        let spec = transient_spec(cells);
        group.bench_with_input(BenchmarkId::from_parameter(cells), &spec, |b, spec| {
            b.iter(|| step(spec, &spec.u0, 1, &cfg).expect("step converges"))
        });
    }
    group.finish();
}

fn stationary(c: &mut Criterion) {
    let cfg = SolverConfig::default();
    let mut group = c.benchmark_group("stationary_continuation");
    group.sample_size(10);
    for (name, spec) in stationary_regression_problems() {
        group.bench_function(name, |b| {
            b.iter(|| solve_stationary(&spec, &cfg).expect("continuation converges"))
        });
    }
    group.finish();
}

fn inequality_suite(c: &mut Criterion) {
    let poly = bench_polynomial();
    let cfg = SuiteConfig {
        samples: 10_000,
        ..SuiteConfig::default()
    };
    let mut group = c.benchmark_group("inequality_suite");
    group.sample_size(10);
    group.bench_function("10k samples", |b| {
        b.iter(|| run_randomized_suite(&poly, &cfg).expect("valid config"))
    });
    group.finish();
}

criterion_group!(
    benches,
    inversion,
    transient_step,
    stationary,
    inequality_suite
);
criterion_main!(benches);
