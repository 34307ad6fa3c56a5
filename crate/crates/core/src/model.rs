//! Forchheimer polynomial, isentropic gas law and the nonlinear conductivity.
//!
//! The momentum law `F(|m|) m = -grad u` is inverted pointwise: with
//! `calF(s) = s F(s)` strictly increasing from 0 to infinity, the flux
//! magnitude is `|m| = calF^{-1}(|grad u|)` and `m = -K(|grad u|) grad u` with
//! `K(xi) = 1 / F(calF^{-1}(xi))`.

use crate::error::{Error, Result};
use crate::provider::{Point, Provider};

/// Iteration cap of the safeguarded Newton inversion.
pub const MAX_ROOT_ITERATIONS: usize = 200;

/// Magnitude at which `dK/dxi` is clamped when the one-sided limit is infinite.
pub const DERIVATIVE_CLAMP: f64 = 1e12;

/// Relative tolerance of the `K(xi) xi == calF^{-1}(xi)` identity check.
const FLUX_IDENTITY_TOL: f64 = 1e-12;

/// Generalized polynomial `F(x, t, z) = sum_i a_i(x, t) z^{alpha_i}` with
/// `0 = alpha_0 < alpha_1 < ... < alpha_N`.
#[derive(Debug, Clone)]
pub struct ForchheimerPolynomial {
    exponents: Vec<f64>,
    coefficients: Vec<Provider>,
}

/// Observed coefficient range over a set of sample points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientBounds {
    /// Smallest value of `a_0` and `a_N` seen.
    pub lower: f64,
    /// Largest value of any `a_i` seen.
    pub upper: f64,
}

impl ForchheimerPolynomial {
    pub fn new(exponents: Vec<f64>, coefficients: Vec<Provider>) -> Result<Self> {
        let mut problems = Vec::new();
        if exponents.is_empty() {
            problems.push("polynomial needs at least one term".to_string());
        }
        if exponents.len() != coefficients.len() {
            problems.push(format!(
                "{} exponents but {} coefficients",
                exponents.len(),
                coefficients.len()
            ));
        }
        if let Some(&first) = exponents.first() {
            if first != 0.0 {
                problems.push(format!("alpha_0 must be 0, got {first}"));
            }
        }
        if exponents.iter().any(|a| !a.is_finite()) {
            problems.push("exponents must be finite".to_string());
        }
        for (i, w) in exponents.windows(2).enumerate() {
            if w[1] <= w[0] {
                problems.push(format!(
                    "exponents must be strictly increasing: alpha_{} = {} >= alpha_{} = {}",
                    i,
                    w[0],
                    i + 1,
                    w[1]
                ));
            }
        }
        let poly = ForchheimerPolynomial {
            exponents,
            coefficients,
        };
        if problems.is_empty() {
            // constant coefficients can be checked right away
            if poly.coefficients.iter().all(|c| c.as_constant().is_some()) {
                if let Err(Error::Config(mut p)) = poly.at([0.0, 0.0], 0.0) {
                    problems.append(&mut p);
                }
            }
        }
        if problems.is_empty() {
            Ok(poly)
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Polynomial with constant coefficients.
    pub fn constant(exponents: &[f64], coefficients: &[f64]) -> Result<Self> {
        Self::new(
            exponents.to_vec(),
            coefficients
                .iter()
                .copied()
                .map(Provider::constant)
                .collect(),
        )
    }

    /// Darcy law `F = a_0`.
    pub fn darcy(a0: f64) -> Result<Self> {
        Self::constant(&[0.0], &[a0])
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn coefficients(&self) -> &[Provider] {
        &self.coefficients
    }

    /// Number of terms minus one.
    pub fn degree_index(&self) -> usize {
        self.exponents.len() - 1
    }

    /// Highest exponent `alpha_N`.
    pub fn top_exponent(&self) -> f64 {
        *self.exponents.last().expect("validated non-empty")
    }

    /// Freezes the coefficients at `(x, t)`.
    pub fn at(&self, x: Point, t: f64) -> Result<LocalPolynomial> {
        let coeffs: Vec<f64> = self.coefficients.iter().map(|c| c.eval(x, t)).collect();
        LocalPolynomial::new(self.exponents.clone(), coeffs)
    }

    /// Checks the coefficient bounds on sample points and returns the
    /// observed `(lower, upper)` pair.
    pub fn validate_coefficients(
        &self,
        samples: impl IntoIterator<Item = (Point, f64)>,
    ) -> Result<CoefficientBounds> {
        let mut lower = f64::INFINITY;
        let mut upper = 0.0_f64;
        let mut problems = Vec::new();
        let n = self.degree_index();
        for (x, t) in samples {
            match self.at(x, t) {
                Ok(local) => {
                    lower = lower.min(local.coeffs[0]).min(local.coeffs[n]);
                    upper = local.coeffs.iter().copied().fold(upper, f64::max);
                }
                Err(Error::Config(p)) => {
                    for msg in p {
                        problems.push(format!("at x = {x:?}, t = {t}: {msg}"));
                    }
                }
                Err(e) => return Err(e),
            }
            if problems.len() > 16 {
                break;
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        if !lower.is_finite() {
            return Err(Error::config("no coefficient samples supplied"));
        }
        Ok(CoefficientBounds { lower, upper })
    }

    pub fn eval_f(&self, x: Point, t: f64, z: f64) -> Result<f64> {
        check_non_negative("z", z)?;
        Ok(self.at(x, t)?.f(z))
    }

    pub fn invert_calf(&self, x: Point, t: f64, xi: f64) -> Result<f64> {
        self.at(x, t)?.invert_calf(xi)
    }

    pub fn eval_k(&self, x: Point, t: f64, xi: f64) -> Result<f64> {
        self.at(x, t)?.conductivity(xi)
    }

    pub fn eval_k_with_derivative(&self, x: Point, t: f64, xi: f64) -> Result<KDerivative> {
        self.at(x, t)?.conductivity_with_derivative(xi)
    }

    pub fn flux_magnitude(&self, x: Point, t: f64, xi: f64) -> Result<f64> {
        self.at(x, t)?.flux_magnitude(xi)
    }
}

fn check_non_negative(what: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { what, value })
    }
}

/// `K` and `dK/dxi` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KDerivative {
    pub k: f64,
    pub dk_dxi: f64,
    /// Set when the derivative was infinite or exceeded [`DERIVATIVE_CLAMP`].
    pub clamped: bool,
}

/// Result of inverting `calF`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub s: f64,
    pub iterations: usize,
    /// True if any Newton step was rejected in favour of bisection.
    pub bisected: bool,
}

/// Forchheimer polynomial with coefficients frozen at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPolynomial {
    exponents: Vec<f64>,
    coeffs: Vec<f64>,
}

impl LocalPolynomial {
    pub fn new(exponents: Vec<f64>, coeffs: Vec<f64>) -> Result<Self> {
        let mut problems = Vec::new();
        let n = coeffs.len().saturating_sub(1);
        for (i, &a) in coeffs.iter().enumerate() {
            if !a.is_finite() || a < 0.0 {
                problems.push(format!("coefficient a_{i} = {a} must be finite and >= 0"));
            }
        }
        if let Some(&a0) = coeffs.first() {
            if a0 <= 0.0 {
                problems.push(format!("leading coefficient a_0 = {a0} must be > 0"));
            }
        }
        if n > 0 && coeffs[n] <= 0.0 {
            problems.push(format!("top coefficient a_{n} = {} must be > 0", coeffs[n]));
        }
        if exponents.len() != coeffs.len() || coeffs.is_empty() {
            problems.push("exponent/coefficient count mismatch".to_string());
        }
        if problems.is_empty() {
            Ok(LocalPolynomial { exponents, coeffs })
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.coeffs
            .iter()
            .copied()
            .zip(self.exponents.iter().copied())
    }

    /// `F(z)`.
    #[inline]
    pub fn f(&self, z: f64) -> f64 {
        self.terms().map(|(a, p)| a * z.powf(p)).sum()
    }

    /// `F'(z)`; infinite at `z = 0` when a term with exponent in (0, 1) is
    /// present.
    pub fn df(&self, z: f64) -> f64 {
        self.terms()
            .skip(1)
            .map(|(a, p)| {
                if a == 0.0 {
                    0.0
                } else {
                    a * p * z.powf(p - 1.0)
                }
            })
            .sum()
    }

    /// `calF(s) = s F(s)`.
    #[inline]
    pub fn calf(&self, s: f64) -> f64 {
        self.terms().map(|(a, p)| a * s.powf(p + 1.0)).sum()
    }

    /// `calF'(s) = F(s) + s F'(s)`, bounded below by `a_0`.
    #[inline]
    pub fn dcalf(&self, s: f64) -> f64 {
        self.terms().map(|(a, p)| a * (p + 1.0) * s.powf(p)).sum()
    }

    /// Unique `s >= 0` with `s F(s) = xi`.
    pub fn invert_calf(&self, xi: f64) -> Result<f64> {
        self.invert_calf_traced(xi).map(|inv| inv.s)
    }

    /// Safeguarded Newton on `s -> calF(s) - xi` inside a bisection bracket.
    pub fn invert_calf_traced(&self, xi: f64) -> Result<Inversion> {
        check_non_negative("xi", xi)?;
        if xi == 0.0 {
            return Ok(Inversion {
                s: 0.0,
                iterations: 0,
                bisected: false,
            });
        }
        // Each term alone bounds the root: a_i s^{1+alpha_i} <= xi.
        let mut hi = self
            .terms()
            .filter(|&(a, _)| a > 0.0)
            .map(|(a, p)| (xi / a).powf(1.0 / (1.0 + p)))
            .fold(f64::INFINITY, f64::min);
        let mut lo = 0.0;
        if !hi.is_finite() {
            hi = (xi / self.coeffs[0]).max(1.0);
        }
        let mut doublings = 0;
        while self.calf(hi) < xi {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > 2048 || !hi.is_finite() {
                return Err(Error::RootNotConverged {
                    lo,
                    hi,
                    iterations: 0,
                });
            }
        }

        // calF is convex, so Newton from the upper end decreases monotonically.
        let mut s = hi;
        let mut bisected = false;
        for it in 1..=MAX_ROOT_ITERATIONS {
            let g = self.calf(s) - xi;
            if g == 0.0 {
                return Ok(Inversion {
                    s,
                    iterations: it,
                    bisected,
                });
            }
            if g > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let mut next = s - g / self.dcalf(s);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
                bisected = true;
            }
            let step = (next - s).abs();
            if step <= 1e-15 * next || hi - lo <= 1e-300 {
                return Ok(Inversion {
                    s: next,
                    iterations: it,
                    bisected,
                });
            }
            s = next;
        }
        Err(Error::RootNotConverged {
            lo,
            hi,
            iterations: MAX_ROOT_ITERATIONS,
        })
    }

    /// `K(xi) = 1 / F(calF^{-1}(xi))`.
    pub fn conductivity(&self, xi: f64) -> Result<f64> {
        let s = self.invert_calf(xi)?;
        Ok(1.0 / self.f(s))
    }

    /// `K` together with `dK/dxi = -F'(s) / (F(s)^2 (F(s) + s F'(s)))`.
    pub fn conductivity_with_derivative(&self, xi: f64) -> Result<KDerivative> {
        let s = self.invert_calf(xi)?;
        let f = self.f(s);
        let k = 1.0 / f;
        let df = if s > 0.0 {
            self.df(s)
        } else {
            self.df_at_zero()
        };
        let dk = if df.is_infinite() {
            f64::NEG_INFINITY
        } else {
            -df / (f * f * (f + s * df))
        };
        if dk.is_finite() && dk.abs() <= DERIVATIVE_CLAMP {
            Ok(KDerivative {
                k,
                dk_dxi: dk,
                clamped: false,
            })
        } else {
            Ok(KDerivative {
                k,
                dk_dxi: -DERIVATIVE_CLAMP,
                clamped: true,
            })
        }
    }

    /// One-sided limit of `F'` at zero.
    fn df_at_zero(&self) -> f64 {
        match self.terms().skip(1).find(|&(a, _)| a > 0.0) {
            None => 0.0,
            Some((_, p)) if p > 1.0 => 0.0,
            Some((a, p)) => {
                if p == 1.0 {
                    a
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `|m| = K(xi) xi`, checked against `calF^{-1}(xi)`.
    pub fn flux_magnitude(&self, xi: f64) -> Result<f64> {
        let s = self.invert_calf(xi)?;
        let m = xi / self.f(s);
        if (m - s).abs() > FLUX_IDENTITY_TOL * s.max(f64::MIN_POSITIVE) {
            return Err(Error::Consistency(format!(
                "K(xi) xi = {m} differs from calF^-1(xi) = {s} at xi = {xi}"
            )));
        }
        Ok(m)
    }

    /// `d calF^{-1} / d xi = 1 / calF'(s)`: the slope of the flux magnitude,
    /// equal to `K + xi dK/dxi`.
    #[inline]
    pub fn flux_slope_at(&self, s: f64) -> f64 {
        1.0 / self.dcalf(s)
    }
}

/// Isentropic gas `p = c rho^gamma`, with `lambda = 1 / (gamma + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasModel {
    c: f64,
    gamma: f64,
    lambda: f64,
    physical: bool,
}

impl GasModel {
    /// Physical gas with `c > 1`, `gamma > 1`.
    pub fn new(c: f64, gamma: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if !(c > 1.0 && c.is_finite()) {
            problems.push(format!("gas constant c = {c} must be > 1"));
        }
        if !(gamma > 1.0 && gamma.is_finite()) {
            problems.push(format!("adiabatic exponent gamma = {gamma} must be > 1"));
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        Ok(GasModel {
            c,
            gamma,
            lambda: 1.0 / (gamma + 1.0),
            physical: true,
        })
    }

    /// Model specified directly by its accumulation exponent, with gas
    /// constants already absorbed into the porosity. `lambda = 1` is the
    /// linear test mode (classical heat equation for Darcy flow).
    pub fn from_lambda(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::config(format!(
                "lambda = {lambda} must lie in (0, 1]"
            )));
        }
        Ok(GasModel {
            c: 1.0,
            gamma: 1.0 / lambda - 1.0,
            lambda,
            physical: false,
        })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_physical(&self) -> bool {
        self.physical
    }

    pub fn is_linear_test_mode(&self) -> bool {
        self.lambda == 1.0
    }

    /// `((gamma + 1) / (c gamma))^lambda`; 1 for non-physical models.
    pub fn porosity_scale(&self) -> f64 {
        if self.physical {
            ((self.gamma + 1.0) / (self.c * self.gamma)).powf(self.lambda)
        } else {
            1.0
        }
    }

    /// Density from pseudo-pressure.
    pub fn density_from_u(&self, u: f64) -> Result<f64> {
        check_non_negative("u", u)?;
        Ok(self.porosity_scale() * u.powf(self.lambda))
    }

    /// `u = c gamma rho^{gamma+1} / (gamma + 1)`.
    pub fn u_from_density(&self, rho: f64) -> Result<f64> {
        check_non_negative("rho", rho)?;
        if !self.physical {
            return Ok(rho.powf(1.0 / self.lambda));
        }
        Ok(self.c * self.gamma * rho.powf(self.gamma + 1.0) / (self.gamma + 1.0))
    }

    /// `p = c rho^gamma`.
    pub fn pressure(&self, rho: f64) -> Result<f64> {
        check_non_negative("rho", rho)?;
        Ok(self.c * rho.powf(self.gamma))
    }

    /// The accumulation nonlinearity extended oddly to negative arguments.
    #[inline]
    pub fn pi(&self, u: f64) -> f64 {
        pow_odd(u, self.lambda)
    }
}

/// `sign(u) |u|^p`.
#[inline]
pub fn pow_odd(u: f64, p: f64) -> f64 {
    if u >= 0.0 {
        u.powf(p)
    } else {
        -(-u).powf(p)
    }
}

/// Exponents used throughout the analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedExponents {
    /// `alpha_N + 2`
    pub s: f64,
    /// `s / (s - 1)`
    pub s_star: f64,
    /// `1 + lambda`
    pub r: f64,
    /// `1 + 1 / lambda`
    pub r_star: f64,
    /// `alpha_N / (alpha_N + 1)`
    pub alpha: f64,
    /// Whether `r <= s*` (equivalently `alpha_N <= gamma`) holds.
    pub h3_satisfied: bool,
}

impl DerivedExponents {
    pub fn new(top_exponent: f64, lambda: f64) -> Self {
        let s = top_exponent + 2.0;
        let alpha = top_exponent / (top_exponent + 1.0);
        let s_star = 2.0 - alpha;
        let r = 1.0 + lambda;
        let r_star = 1.0 + 1.0 / lambda;
        DerivedExponents {
            s,
            s_star,
            r,
            r_star,
            alpha,
            h3_satisfied: r <= s_star + 1e-14,
        }
    }
}

pub fn derive_exponents(poly: &ForchheimerPolynomial, gas: &GasModel) -> DerivedExponents {
    DerivedExponents::new(poly.top_exponent(), gas.lambda())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const X: Point = [0.3, 0.0];

    fn two_term() -> ForchheimerPolynomial {
        ForchheimerPolynomial::constant(&[0.0, 1.0], &[1.0, 1.0]).unwrap()
    }

    #[test]
    fn eval_f_examples() {
        let darcy = ForchheimerPolynomial::darcy(1.0).unwrap();
        assert_eq!(darcy.eval_f(X, 0.0, 7.3).unwrap(), 1.0);
        assert_eq!(two_term().eval_f(X, 0.0, 2.0).unwrap(), 3.0);
        let p = ForchheimerPolynomial::constant(&[0.0, 0.5], &[0.5, 2.0]).unwrap();
        // 0.5 + 2 * 4^0.5, checked with mpmath
        assert_relative_eq!(p.eval_f(X, 0.0, 4.0).unwrap(), 4.5, max_relative = 1e-15);
    }

    #[test]
    fn eval_f_rejects_negative_argument() {
        assert!(matches!(
            two_term().eval_f(X, 0.0, -1.0),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn coefficient_violation_is_config_error() {
        let p = ForchheimerPolynomial::new(
            vec![0.0, 1.0],
            vec![Provider::constant(1.0), Provider::new(|x, _| x[0] - 0.5)],
        )
        .unwrap();
        assert!(matches!(
            p.eval_f([0.1, 0.0], 0.0, 1.0),
            Err(Error::Config(_))
        ));
        assert!(p.eval_f([0.9, 0.0], 0.0, 1.0).is_ok());
        let samples = (0..11).map(|i| ([i as f64 / 10.0, 0.0], 0.0));
        assert!(p.validate_coefficients(samples).is_err());
    }

    #[test]
    fn bad_exponents_rejected() {
        assert!(ForchheimerPolynomial::constant(&[0.0, 2.0, 1.0], &[1.0, 1.0, 1.0]).is_err());
        assert!(ForchheimerPolynomial::constant(&[0.5, 1.0], &[1.0, 1.0]).is_err());
        assert!(ForchheimerPolynomial::constant(&[0.0], &[0.0]).is_err());
        match ForchheimerPolynomial::constant(&[0.1, 0.0], &[0.0, 1.0]) {
            Err(Error::Config(p)) => assert!(p.len() >= 2, "{p:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inversion_examples() {
        assert_eq!(two_term().invert_calf(X, 0.0, 0.0).unwrap(), 0.0);
        let d = ForchheimerPolynomial::darcy(2.0).unwrap();
        assert_relative_eq!(
            d.invert_calf(X, 0.0, 10.0).unwrap(),
            5.0,
            max_relative = 1e-15
        );
        // root of s(1+s) = 6, bisection oracle
        assert_relative_eq!(
            two_term().invert_calf(X, 0.0, 6.0).unwrap(),
            2.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn conductivity_examples() {
        let p = ForchheimerPolynomial::constant(&[0.0, 0.5, 2.0], &[0.7, 1.0, 3.0]).unwrap();
        assert_eq!(p.eval_k(X, 0.0, 0.0).unwrap(), 1.0 / 0.7);
        let d = ForchheimerPolynomial::darcy(1.0).unwrap();
        assert_eq!(d.eval_k(X, 0.0, 99.0).unwrap(), 1.0);
        assert_relative_eq!(
            two_term().eval_k(X, 0.0, 6.0).unwrap(),
            1.0 / 3.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn conductivity_derivative_examples() {
        let d = ForchheimerPolynomial::darcy(4.0).unwrap();
        let kd = d.eval_k_with_derivative(X, 0.0, 3.0).unwrap();
        assert_eq!((kd.k, kd.dk_dxi, kd.clamped), (0.25, 0.0, false));

        let kd = two_term().eval_k_with_derivative(X, 0.0, 6.0).unwrap();
        assert_relative_eq!(kd.k, 1.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(kd.dk_dxi, -1.0 / 45.0, max_relative = 1e-12);
        // central difference oracle
        let h = 1e-6;
        let fd = (two_term().eval_k(X, 0.0, 6.0 + h).unwrap()
            - two_term().eval_k(X, 0.0, 6.0 - h).unwrap())
            / (2.0 * h);
        assert!((fd - kd.dk_dxi).abs() < 1e-7);

        let kd = two_term().eval_k_with_derivative(X, 0.0, 0.0).unwrap();
        assert_eq!((kd.k, kd.dk_dxi), (1.0, -1.0));
        // one-sided difference oracle
        let h = 1e-7;
        let fd = (two_term().eval_k(X, 0.0, h).unwrap() - 1.0) / h;
        assert!((fd + 1.0).abs() < 1e-5);
    }

    #[test]
    fn fractional_exponent_derivative_is_clamped_at_zero() {
        let p = ForchheimerPolynomial::constant(&[0.0, 0.5], &[1.0, 1.0]).unwrap();
        let kd = p.eval_k_with_derivative(X, 0.0, 0.0).unwrap();
        assert!(kd.clamped);
        assert_eq!(kd.dk_dxi, -DERIVATIVE_CLAMP);
        let kd = p.eval_k_with_derivative(X, 0.0, 1.0).unwrap();
        assert!(!kd.clamped && kd.dk_dxi < 0.0);
        // higher exponents give a zero limit
        let p = ForchheimerPolynomial::constant(&[0.0, 1.5], &[1.0, 1.0]).unwrap();
        let kd = p.eval_k_with_derivative(X, 0.0, 0.0).unwrap();
        assert_eq!((kd.dk_dxi, kd.clamped), (0.0, false));
    }

    #[test]
    fn flux_magnitude_examples() {
        assert_eq!(two_term().flux_magnitude(X, 0.0, 0.0).unwrap(), 0.0);
        let d = ForchheimerPolynomial::darcy(2.0).unwrap();
        assert_relative_eq!(
            d.flux_magnitude(X, 0.0, 10.0).unwrap(),
            5.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            two_term().flux_magnitude(X, 0.0, 6.0).unwrap(),
            2.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn flux_slope_matches_k_plus_xi_dk() {
        let p = ForchheimerPolynomial::constant(&[0.0, 0.4, 1.3], &[1.0, 0.6, 2.0]).unwrap();
        let local = p.at(X, 0.0).unwrap();
        for &xi in &[0.01, 0.7, 5.0, 300.0] {
            let kd = local.conductivity_with_derivative(xi).unwrap();
            let s = local.invert_calf(xi).unwrap();
            assert_relative_eq!(
                local.flux_slope_at(s),
                kd.k + xi * kd.dk_dxi,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn density_examples() {
        let gas = GasModel::new(1.5, 2.0).unwrap();
        assert_eq!(gas.density_from_u(0.0).unwrap(), 0.0);
        assert_relative_eq!(gas.density_from_u(8.0).unwrap(), 2.0, max_relative = 1e-15);
        let gas = GasModel::new(2.0, 3.0).unwrap();
        // (4/6)^{1/4} 16^{1/4} via mpmath
        assert_relative_eq!(
            gas.density_from_u(16.0).unwrap(),
            1.807_204_007_219_689_7,
            max_relative = 1e-15
        );
        assert!(matches!(
            gas.density_from_u(-1.0),
            Err(Error::Domain { .. })
        ));
        assert!((gas.lambda() * (gas.gamma() + 1.0) - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn gas_validation() {
        assert!(GasModel::new(1.0, 2.0).is_err());
        assert!(GasModel::new(2.0, 1.0).is_err());
        assert!(GasModel::from_lambda(0.0).is_err());
        assert!(GasModel::from_lambda(1.2).is_err());
        assert!(GasModel::from_lambda(1.0).unwrap().is_linear_test_mode());
    }

    #[test]
    fn exponent_examples() {
        let e = DerivedExponents::new(1.0, 0.5);
        assert_eq!((e.s, e.s_star, e.r, e.r_star), (3.0, 1.5, 1.5, 3.0));
        let e = DerivedExponents::new(0.0, 0.5);
        assert_eq!((e.s, e.s_star, e.r, e.r_star), (2.0, 2.0, 1.5, 3.0));
        let poly = ForchheimerPolynomial::constant(&[0.0, 2.0], &[1.0, 1.0]).unwrap();
        let gas = GasModel::new(2.0, 3.0).unwrap();
        let e = derive_exponents(&poly, &gas);
        assert_eq!((e.s, e.r, e.r_star), (4.0, 1.25, 5.0));
        assert_relative_eq!(e.s_star, 4.0 / 3.0, max_relative = 1e-15);
        assert!(e.h3_satisfied);
        let poly = ForchheimerPolynomial::constant(&[0.0, 4.0], &[1.0, 1.0]).unwrap();
        assert!(!derive_exponents(&poly, &gas).h3_satisfied);
    }
}
