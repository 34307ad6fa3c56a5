//! Randomized verification of the structural inequalities behind the
//! existence theory.
//!
//! Vector inequalities for the momentum nonlinearity `y -> F(|y|) y`:
//!
//! * continuity: `|F(|y'|)y' - F(|y|)y| <= C1 (1 + |y'|^aN + |y|^aN) |y' - y|`
//! * monotonicity: `(F(|y'|)y' - F(|y|)y) . (y' - y) >= C2 (|y'-y|^2 + |y'-y|^s)`
//!
//! with `C1 = 2^aN (1 + aN) (N + 1) max_i a_i` and
//! `C2 = min(a_0, a_N / (2^(aN+1) (aN + 1))) / 2`.
//!
//! Scalar inequalities for `a, b >= 0`, `lambda in (0, 1]`, `p > 0`:
//!
//! * `ee3`:    `(a^p + b^p)/2 <= (a + b)^p <= 2^|p-1| (a^p + b^p)`
//! * `h_cont`: `|a^lambda - b^lambda| <= |a - b|^lambda`
//! * `mono`:   `|a - b|^2 / (a^(1-lambda) + b^(1-lambda)) <= (a^lambda - b^lambda)(a - b)`
//! * `ineqa`:  `(a^lambda - b^lambda) a >= (a^r - b^r) / r*`
//!
//! Every check returns a margin normalized so that `margin >= 0` means the
//! inequality holds; [`PASS_TOLERANCE`] absorbs round-off relative to the
//! magnitude of both sides.
//!
//! `mono` holds only for `lambda >= 1/2` (equality at exactly 1/2); below that
//! it fails on a large fraction of inputs. The suite reports it as stated.
//! [`check_mono_weighted`] is the mean-value form with a factor `lambda` on
//! the left, which holds on all of `(0, 1]`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ForchheimerPolynomial, LocalPolynomial};
use crate::provider::Point;

/// Relative slack below zero tolerated before a margin counts as a failure.
pub const PASS_TOLERANCE: f64 = 1e-12;

const CHUNK: usize = 2048;

/// Signed slack of one inequality evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    /// Larger side minus smaller side, as the inequality claims.
    pub value: f64,
    /// `1 + |lhs| + |rhs|`.
    pub scale: f64,
    /// The constant used on the bounding side (0 for constant-free checks).
    pub constant: f64,
}

impl Margin {
    fn new(bigger: f64, smaller: f64, constant: f64) -> Self {
        Margin {
            value: bigger - smaller,
            scale: 1.0 + bigger.abs() + smaller.abs(),
            constant,
        }
    }

    pub fn relative(&self) -> f64 {
        self.value / self.scale
    }

    pub fn passes(&self) -> bool {
        self.relative() >= -PASS_TOLERANCE
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn momentum(p: &LocalPolynomial, y: &[f64]) -> Vec<f64> {
    let f = p.f(norm(y));
    y.iter().map(|v| f * v).collect()
}

/// `C1 = 2^aN (1 + aN) (N + 1) max_i a_i`.
pub fn continuity_constant(p: &LocalPolynomial) -> f64 {
    let top = *p.exponents().last().expect("non-empty");
    let n = p.exponents().len() as f64;
    let amax = p.coefficients().iter().copied().fold(0.0, f64::max);
    2f64.powf(top) * (1.0 + top) * n * amax
}

/// `C2 = min(a_0, a_N / (2^(aN+1) (aN + 1))) / 2` with pointwise coefficients.
pub fn monotonicity_constant(p: &LocalPolynomial) -> f64 {
    let top = *p.exponents().last().expect("non-empty");
    let a0 = p.coefficients()[0];
    let an = *p.coefficients().last().expect("non-empty");
    0.5 * a0.min(an / (2f64.powf(top + 1.0) * (top + 1.0)))
}

pub fn check_f_continuity_local(p: &LocalPolynomial, y_prime: &[f64], y: &[f64]) -> Margin {
    let top = *p.exponents().last().expect("non-empty");
    let c1 = continuity_constant(p);
    let diff: Vec<f64> = y_prime.iter().zip(y).map(|(a, b)| a - b).collect();
    let my = momentum(p, y);
    let lhs = norm(
        &momentum(p, y_prime)
            .iter()
            .zip(&my)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    let rhs = c1 * (1.0 + norm(y_prime).powf(top) + norm(y).powf(top)) * norm(&diff);
    Margin::new(rhs, lhs, c1)
}

pub fn check_f_monotonicity_local(p: &LocalPolynomial, y_prime: &[f64], y: &[f64]) -> Margin {
    let s = p.exponents().last().expect("non-empty") + 2.0;
    let c2 = monotonicity_constant(p);
    let diff: Vec<f64> = y_prime.iter().zip(y).map(|(a, b)| a - b).collect();
    let my = momentum(p, y);
    let lhs: f64 = momentum(p, y_prime)
        .iter()
        .zip(&my)
        .zip(&diff)
        .map(|((a, b), d)| (a - b) * d)
        .sum();
    let dn = norm(&diff);
    let rhs = c2 * (dn * dn + dn.powf(s));
    Margin::new(lhs, rhs, c2)
}

/// Continuity inequality at `(x, t)`.
pub fn check_f_continuity(
    poly: &ForchheimerPolynomial,
    x: Point,
    t: f64,
    y_prime: &[f64],
    y: &[f64],
) -> Result<Margin> {
    check_dims(y_prime, y)?;
    Ok(check_f_continuity_local(&poly.at(x, t)?, y_prime, y))
}

/// Monotonicity inequality at `(x, t)`.
pub fn check_f_monotonicity(
    poly: &ForchheimerPolynomial,
    x: Point,
    t: f64,
    y_prime: &[f64],
    y: &[f64],
) -> Result<Margin> {
    check_dims(y_prime, y)?;
    Ok(check_f_monotonicity_local(&poly.at(x, t)?, y_prime, y))
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || !(2..=3).contains(&a.len()) {
        return Err(Error::Shape(format!(
            "vectors must share dimension 2 or 3, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Margins of the four scalar inequalities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementaryMargins {
    pub ee3: Margin,
    pub h_cont: Margin,
    pub mono: Margin,
    pub ineqa: Margin,
}

pub fn check_elementary(a: f64, b: f64, lambda: f64, p: f64) -> ElementaryMargins {
    // ee3: report the tighter of the two sides
    let sum_p = a.powf(p) + b.powf(p);
    let mid = (a + b).powf(p);
    let upper_c = 2f64.powf((p - 1.0).abs());
    let left = Margin::new(mid, 0.5 * sum_p, 0.5);
    let right = Margin::new(upper_c * sum_p, mid, upper_c);
    let ee3 = if left.relative() <= right.relative() {
        left
    } else {
        right
    };

    let al = a.powf(lambda);
    let bl = b.powf(lambda);
    let h_cont = Margin::new((a - b).abs().powf(lambda), (al - bl).abs(), 1.0);

    let denom = a.powf(1.0 - lambda) + b.powf(1.0 - lambda);
    let mono_lhs = if a == b { 0.0 } else { (a - b).powi(2) / denom };
    let mono = Margin::new((al - bl) * (a - b), mono_lhs, 1.0);

    let r = 1.0 + lambda;
    let r_star = 1.0 + 1.0 / lambda;
    let ineqa = Margin::new(
        (al - bl) * a,
        (a.powf(r) - b.powf(r)) / r_star,
        1.0 / r_star,
    );

    ElementaryMargins {
        ee3,
        h_cont,
        mono,
        ineqa,
    }
}

/// `lambda |a - b|^2 / (a^(1-lambda) + b^(1-lambda)) <= (a^lambda - b^lambda)(a - b)`.
pub fn check_mono_weighted(a: f64, b: f64, lambda: f64) -> Margin {
    let denom = a.powf(1.0 - lambda) + b.powf(1.0 - lambda);
    let lhs = if a == b {
        0.0
    } else {
        lambda * (a - b).powi(2) / denom
    };
    Margin::new((a.powf(lambda) - b.powf(lambda)) * (a - b), lhs, lambda)
}

/// Configuration of [`run_randomized_suite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub samples: usize,
    pub seed: u64,
    /// Component magnitudes are drawn log-uniformly from this range.
    pub magnitude_range: (f64, f64),
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            samples: 100_000,
            seed: 20_240_601,
            magnitude_range: (1e-6, 1e3),
        }
    }
}

/// Summary of one inequality over all samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub samples: usize,
    /// Smallest `margin / scale` observed.
    pub min_margin: f64,
    /// Raw margin at the worst case.
    pub worst_raw_margin: f64,
    /// Inputs achieving the smallest margin.
    pub worst_case: String,
    pub constant_used: f64,
    pub seed: u64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
struct Worst {
    margin: Margin,
    case: String,
}

impl Worst {
    fn better_of(a: Option<Worst>, b: Option<Worst>) -> Option<Worst> {
        match (a, b) {
            (Some(a), Some(b)) => {
                // ties keep the earlier chunk so the result is order independent
                if b.margin.relative() < a.margin.relative() {
                    Some(b)
                } else {
                    Some(a)
                }
            }
            (a, None) => a,
            (None, b) => b,
        }
    }

    fn offer(slot: &mut Option<Worst>, margin: Margin, case: impl FnOnce() -> String) {
        let replace = match slot {
            None => true,
            Some(w) => margin.relative() < w.margin.relative(),
        };
        if replace {
            *slot = Some(Worst {
                margin,
                case: case(),
            });
        }
    }
}

const NAMES: [&str; 6] = ["F-cont", "F-mono", "ee3", "H-cont", "Mono", "ineqa"];

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    let (l, h) = (lo.ln(), hi.ln());
    (l + (h - l) * rng.gen::<f64>()).exp()
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize, range: (f64, f64)) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let m = log_uniform(rng, range);
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect()
}

fn scalar(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if rng.gen::<f64>() < 0.05 {
        0.0
    } else {
        log_uniform(rng, range)
    }
}

fn run_chunk(
    poly: &ForchheimerPolynomial,
    cfg: &SuiteConfig,
    chunk: usize,
    count: usize,
) -> Result<[Option<Worst>; 6]> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chunk as u64);
    let mut worst: [Option<Worst>; 6] = Default::default();
    for k in 0..count {
        let dim = 2 + (chunk * CHUNK + k) % 2;
        let x: Point = [rng.gen(), rng.gen()];
        let t: f64 = rng.gen();
        let local = poly.at(x, t)?;
        let yp = random_vector(&mut rng, dim, cfg.magnitude_range);
        let y = random_vector(&mut rng, dim, cfg.magnitude_range);
        let describe = || format!("x={x:?} t={t:.6} y'={yp:?} y={y:?}");
        Worst::offer(
            &mut worst[0],
            check_f_continuity_local(&local, &yp, &y),
            describe,
        );
        Worst::offer(
            &mut worst[1],
            check_f_monotonicity_local(&local, &yp, &y),
            describe,
        );

        let a = scalar(&mut rng, cfg.magnitude_range);
        let b = scalar(&mut rng, cfg.magnitude_range);
        let lambda = 1.0 - rng.gen::<f64>();
        let p = 5.0 * (1.0 - rng.gen::<f64>());
        let m = check_elementary(a, b, lambda, p);
        let describe = || format!("a={a:e} b={b:e} lambda={lambda:.6} p={p:.6}");
        Worst::offer(&mut worst[2], m.ee3, describe);
        Worst::offer(&mut worst[3], m.h_cont, describe);
        Worst::offer(&mut worst[4], m.mono, describe);
        Worst::offer(&mut worst[5], m.ineqa, describe);
    }
    Ok(worst)
}

/// Runs every inequality on `cfg.samples` random inputs. Deterministic for a
/// given seed regardless of thread count.
pub fn run_randomized_suite(
    poly: &ForchheimerPolynomial,
    cfg: &SuiteConfig,
) -> Result<Vec<InequalityReport>> {
    if cfg.samples == 0 {
        return Err(Error::config("inequality suite needs at least one sample"));
    }
    let (lo, hi) = cfg.magnitude_range;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::config(format!(
            "magnitude range ({lo}, {hi}) must satisfy 0 < lo <= hi < inf"
        )));
    }
    let chunks = cfg.samples.div_ceil(CHUNK);
    let partial: Vec<[Option<Worst>; 6]> = (0..chunks)
        .into_par_iter()
        .map(|c| run_chunk(poly, cfg, c, CHUNK.min(cfg.samples - c * CHUNK)))
        .collect::<Result<_>>()?;
    let mut merged: [Option<Worst>; 6] = Default::default();
    for part in partial {
        for (slot, w) in merged.iter_mut().zip(part) {
            *slot = Worst::better_of(slot.take(), w);
        }
    }
    Ok(merged
        .into_iter()
        .zip(NAMES)
        .map(|(w, name)| {
            let w = w.expect("samples > 0");
            InequalityReport {
                name: name.to_string(),
                samples: cfg.samples,
                min_margin: w.margin.relative(),
                worst_raw_margin: w.margin.value,
                worst_case: w.case,
                constant_used: w.margin.constant,
                seed: cfg.seed,
                passed: w.margin.passes(),
            }
        })
        .collect())
}

pub fn all_passed(reports: &[InequalityReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

/// Writes reports as CSV with a header row.
pub fn write_reports_csv<W: Write>(reports: &[InequalityReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const X: Point = [0.5, 0.5];

    fn two_term() -> ForchheimerPolynomial {
        ForchheimerPolynomial::constant(&[0.0, 1.0], &[1.0, 1.0]).unwrap()
    }

    #[test]
    fn continuity_examples() {
        let m = check_f_continuity(&two_term(), X, 0.0, &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(m.value, 0.0);

        let darcy = ForchheimerPolynomial::darcy(1.0).unwrap();
        let m = check_f_continuity(&darcy, X, 0.0, &[2.0, 0.0], &[1.0, 0.0]).unwrap();
        // C1 = 1 and bound = C1 (1 + 1 + 1) |y'-y| = 3 because |y|^0 = 1
        assert_eq!(m.constant, 1.0);
        assert_eq!(m.value, 2.0);

        let m = check_f_continuity(&two_term(), X, 0.0, &[2.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(m.constant, 8.0);
        assert_relative_eq!(m.value, 42.0, max_relative = 1e-15);
    }

    #[test]
    fn monotonicity_examples() {
        let m = check_f_monotonicity(&two_term(), X, 0.0, &[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(m.value, 0.0);

        let darcy = ForchheimerPolynomial::darcy(1.0).unwrap();
        let m = check_f_monotonicity(&darcy, X, 0.0, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        // C2 = min(1, 1/2) / 2 = 1/4, rhs = 1/4 (1 + 1)
        assert_eq!(m.constant, 0.25);
        assert_eq!(m.value, 0.5);

        let m = check_f_monotonicity(&two_term(), X, 0.0, &[3.0, 0.0], &[1.0, 0.0]).unwrap();
        // lhs = (12 - 2) 2 = 20, C2 = min(1, 1/8)/2 = 1/16, rhs = (4 + 8)/16
        assert_eq!(m.constant, 1.0 / 16.0);
        assert_relative_eq!(m.value, 20.0 - 12.0 / 16.0, max_relative = 1e-15);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(check_f_continuity(&two_term(), X, 0.0, &[1.0], &[1.0]).is_err());
        assert!(check_f_monotonicity(&two_term(), X, 0.0, &[1.0, 0.0], &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn elementary_examples() {
        for &(l, p) in &[(0.3, 0.7), (1.0, 1.0), (0.5, 4.0)] {
            let m = check_elementary(1.0, 1.0, l, p);
            assert!(m.ee3.value >= 0.0 && m.ineqa.value.abs() < 1e-15);
            assert_eq!(m.h_cont.value, 0.0);
            assert_eq!(m.mono.value, 0.0);
        }
        let m = check_elementary(4.0, 1.0, 0.5, 1.0);
        assert_relative_eq!(m.h_cont.value, 3f64.sqrt() - 1.0, max_relative = 1e-15);
        let m = check_elementary(0.0, 2.0, 0.5, 3.0);
        // (a+b)^3 = 8 against 2^2 * 8 = 32 and 8 / 2 = 4
        assert_eq!(m.ee3.value, 4.0);
        assert!(m.ee3.passes());
        // zero/zero convention
        let m = check_elementary(0.0, 0.0, 0.4, 2.0);
        assert_eq!(m.mono.value, 0.0);
    }

    #[test]
    fn mono_fails_below_one_half_and_weighted_form_holds() {
        let m = check_elementary(4.0, 1.0, 0.25, 1.0);
        assert!(!m.mono.passes());
        assert!(check_mono_weighted(4.0, 1.0, 0.25).passes());
        let m = check_elementary(4.0, 1.0, 0.5, 1.0);
        assert!(m.mono.value.abs() < 1e-14);
        assert!(check_elementary(4.0, 1.0, 0.75, 1.0).mono.passes());
    }

    #[test]
    fn suite_rejects_zero_samples() {
        let cfg = SuiteConfig {
            samples: 0,
            ..Default::default()
        };
        assert!(matches!(
            run_randomized_suite(&two_term(), &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn suite_is_deterministic() {
        let cfg = SuiteConfig {
            samples: 5000,
            seed: 7,
            ..Default::default()
        };
        let a = run_randomized_suite(&two_term(), &cfg).unwrap();
        let b = run_randomized_suite(&two_term(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        for r in &a {
            if r.name != "Mono" {
                assert!(r.passed, "{r:?}");
            }
        }
        let mut buf = Vec::new();
        write_reports_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("name,samples,min_margin,"));
        assert_eq!(text.lines().count(), 7);
    }
}
