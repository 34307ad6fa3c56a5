//! Implicit Euler in time with homogeneous Dirichlet data:
//!
//! ```text
//! phi (pi(u^j) - pi(u^{j-1})) / h + div m^j = f^j,    m^j = -K^j(|grad u^j|) grad u^j
//! ```
//!
//! Coefficients and source are sampled at `t_j`. Each step is one call of
//! the primal solver with `mass_coeff = 1 / h`.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{
    boundary_outflux, cell_norm_p, face_norm_p, gradient, BoundaryData, CellField, FieldState,
    StaggeredGrid,
};
use crate::mixed::MixedProblem;
use crate::model::{derive_exponents, pow_odd, ForchheimerPolynomial, GasModel};
use crate::provider::Provider;
use crate::solver::{PrimalProblem, SolveDiagnostics, SolverConfig};

/// Uniform partition of `[0, T]` into `J` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        let mut problems = Vec::new();
        if !(t_final > 0.0 && t_final.is_finite()) {
            problems.push(format!("T = {t_final} must be positive and finite"));
        }
        if steps == 0 {
            problems.push("J must be >= 1".to_string());
        }
        if problems.is_empty() {
            Ok(TimeGrid { t_final, steps })
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn h(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    /// `j h`, with `t_J = T` exactly.
    pub fn t(&self, j: usize) -> f64 {
        if j >= self.steps {
            self.t_final
        } else {
            j as f64 * self.h()
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransientSpec {
    pub grid: StaggeredGrid,
    pub poly: ForchheimerPolynomial,
    pub gas: GasModel,
    /// Coefficient of `d_t u^lambda`.
    pub phi: CellField,
    pub f: Provider,
    pub u0: CellField,
    pub time: TimeGrid,
    /// Lipschitz-in-time constant of the coefficients; recorded, not used.
    pub lipschitz_l: Option<f64>,
}

impl TransientSpec {
    /// Strict `h < phi_min lambda / 2`.
    pub fn validate_step(&self) -> Result<()> {
        let threshold = 0.5 * self.phi.min() * self.gas.lambda();
        let h = self.time.h();
        if h < threshold {
            Ok(())
        } else {
            Err(Error::StepRestriction { h, threshold })
        }
    }

    /// Every violated condition, the step restriction included.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.phi.grid() != &self.grid || self.u0.grid() != &self.grid {
            problems.push("phi and u0 must live on the spec grid".to_string());
        }
        let phi_min = self.phi.min();
        if !(phi_min > 0.0) {
            problems.push(format!("porosity must be positive, min = {phi_min}"));
        }
        if self.u0.min() < 0.0 {
            problems.push(format!("u0 must be non-negative, min = {}", self.u0.min()));
        }
        if let Err(Error::StepRestriction { h, threshold }) = self.validate_step() {
            problems.push(format!(
                "time step h = {h} violates h < phi_min * lambda / 2 = {threshold}"
            ));
        }
        let samples: Vec<_> = self
            .grid
            .faces()
            .iter()
            .flat_map(|f| {
                [
                    (f.midpoint, self.time.t(1)),
                    (f.midpoint, self.time.t_final()),
                ]
            })
            .collect();
        if let Err(Error::Config(p)) = self.poly.validate_coefficients(samples) {
            problems.extend(p);
        }
        let bad_f = (0..=self.time.steps())
            .step_by(self.time.steps().div_ceil(8).max(1))
            .any(|j| {
                self.grid
                    .cell_centers()
                    .any(|x| !self.f.eval(x, self.time.t(j)).is_finite())
            });
        if bad_f {
            problems.push("f is not finite on sampled points".to_string());
        }
        if let Some(l) = self.lipschitz_l {
            if !(l >= 0.0) {
                problems.push(format!("lipschitz_L = {l} must be >= 0"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    fn step_problem<'a>(
        &'a self,
        rhs: &'a CellField,
        bdata: &'a BoundaryData,
        j: usize,
    ) -> PrimalProblem<'a> {
        PrimalProblem {
            poly: &self.poly,
            gas: &self.gas,
            phi: &self.phi,
            rhs,
            mass_coeff: 1.0 / self.time.h(),
            eps_zero_order: 0.0,
            bdata,
            t: self.time.t(j),
        }
    }

    /// `f^j + phi pi(u_prev) / h`
    fn step_rhs(&self, u_prev: &CellField, j: usize) -> CellField {
        let h = self.time.h();
        let lambda = self.gas.lambda();
        let f = self.grid.sample_cells(&self.f, self.time.t(j));
        let vals = f
            .values
            .iter()
            .zip(&self.phi.values)
            .zip(&u_prev.values)
            .map(|((f, p), u)| f + p * pow_odd(*u, lambda) / h)
            .collect();
        CellField::new(self.grid, vals).expect("finite data")
    }
}

/// One implicit Euler step from `u_prev`, solved from the initial guess
/// `u_prev`.
pub fn step(
    spec: &TransientSpec,
    u_prev: &CellField,
    j: usize,
    cfg: &SolverConfig,
) -> Result<(FieldState, SolveDiagnostics)> {
    step_from(spec, u_prev, j, u_prev, cfg)
}

pub fn step_from(
    spec: &TransientSpec,
    u_prev: &CellField,
    j: usize,
    u_init: &CellField,
    cfg: &SolverConfig,
) -> Result<(FieldState, SolveDiagnostics)> {
    if j == 0 || j > spec.time.steps() {
        return Err(Error::config(format!(
            "step index {j} outside 1..={}",
            spec.time.steps()
        )));
    }
    let rhs = spec.step_rhs(u_prev, j);
    let bdata = BoundaryData::zero();
    let p = spec.step_problem(&rhs, &bdata, j);
    let (mut u, mut diag) = p.solve(u_init, cfg).map_err(|e| match e {
        Error::NonConvergence {
            context,
            iterations,
            residual,
        } => Error::NonConvergence {
            context: format!("{context} at step {j}"),
            iterations,
            residual,
        },
        other => other,
    })?;
    let u_scale = u
        .values
        .iter()
        .chain(&u_prev.values)
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = -1e-10 * u_scale.max(f64::MIN_POSITIVE);
    for v in &mut u.values {
        if *v < 0.0 && *v >= floor {
            *v = 0.0;
            diag.clamped_cells += 1;
        }
    }
    let m = p.recover_flux(&u)?;
    Ok((FieldState { u, m }, diag))
}

/// Monitored quantities after step `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMonitor {
    pub j: usize,
    pub t: f64,
    pub u_lr: f64,
    pub pi_u_lrstar: f64,
    pub m_l2: f64,
    pub m_ls: f64,
    /// `|u|_{L^r} + |grad u|_{L^{s*}}`
    pub r_norm: f64,
    /// `sum_{i <= j} h |(u^i - u^{i-1}) / h|_{L^r}^r`
    pub dq_sum: f64,
    pub iterations: usize,
    pub residual: f64,
    pub clamped_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassBalance {
    /// `sum phi (pi(u^J) - pi(u^0)) vol`
    pub storage: f64,
    /// `sum_j h (sum f^j vol - outflux(m^j))`
    pub net_supply: f64,
    pub scale: f64,
}

impl MassBalance {
    pub fn defect(&self) -> f64 {
        (self.storage - self.net_supply).abs()
    }

    pub fn relative(&self) -> f64 {
        self.defect() / self.scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMonitors {
    pub steps: Vec<StepMonitor>,
    pub diagnostics: Vec<SolveDiagnostics>,
    pub mass_balance: MassBalance,
}

impl RunMonitors {
    /// Maxima over steps of `(u_lr, pi_u_lrstar, m_l2, m_ls)`.
    pub fn maxima(&self) -> [f64; 4] {
        let mut out = [0.0_f64; 4];
        for s in &self.steps {
            for (o, v) in out.iter_mut().zip([s.u_lr, s.pi_u_lrstar, s.m_l2, s.m_ls]) {
                *o = o.max(v);
            }
        }
        out
    }

    pub fn dq_total(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.dq_sum)
    }

    /// One row per step.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.steps {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientRun {
    /// `(j, state)` for every kept step; step 0 holds `u0`.
    pub states: Vec<(usize, FieldState)>,
    pub monitors: RunMonitors,
}

impl TransientRun {
    pub fn final_state(&self) -> &FieldState {
        &self.states.last().expect("at least u0").1
    }
}

/// Marches all steps, keeping every state.
pub fn run(spec: &TransientSpec, cfg: &SolverConfig) -> Result<TransientRun> {
    run_keeping(spec, cfg, |_| true)
}

/// Marches all steps; `keep(j)` selects the stored states. Step 0 and the
/// final step are always kept.
pub fn run_keeping(
    spec: &TransientSpec,
    cfg: &SolverConfig,
    keep: impl Fn(usize) -> bool,
) -> Result<TransientRun> {
    spec.validate_step()?;
    spec.validate()?;
    let ex = derive_exponents(&spec.poly, &spec.gas);
    let h = spec.time.h();
    let lambda = spec.gas.lambda();
    let vol = spec.grid.cell_volume();
    let zero = BoundaryData::zero();
    let m0 = crate::solver::recover_flux(&spec.u0, &spec.poly, &zero, 0.0)?;
    let mut states = vec![(
        0,
        FieldState {
            u: spec.u0.clone(),
            m: m0,
        },
    )];
    let mut steps = Vec::with_capacity(spec.time.steps());
    let mut diagnostics = Vec::with_capacity(spec.time.steps());
    let mut u_prev = spec.u0.clone();
    let mut dq_sum = 0.0;
    let mut net_supply = 0.0;
    let mut supply_scale = 0.0;
    for j in 1..=spec.time.steps() {
        let (state, diag) = step(spec, &u_prev, j, cfg)?;
        let t = spec.time.t(j);
        let dq = u_prev.zip_map(&state.u, |a, b| (b - a) / h)?;
        dq_sum += h * cell_norm_p(&dq, ex.r)?.powf(ex.r);
        let source: f64 = spec
            .grid
            .sample_cells(&spec.f, t)
            .values
            .iter()
            .sum::<f64>()
            * vol;
        let outflux = boundary_outflux(&state.m);
        net_supply += h * (source - outflux);
        supply_scale += h * (source.abs() + outflux.abs());
        let grad = gradient(&state.u, &zero, t);
        let u_lr = cell_norm_p(&state.u, ex.r)?;
        steps.push(StepMonitor {
            j,
            t,
            u_lr,
            pi_u_lrstar: cell_norm_p(&state.u.map(|v| pow_odd(v, lambda)), ex.r_star)?,
            m_l2: face_norm_p(&state.m, 2.0)?,
            m_ls: face_norm_p(&state.m, ex.s)?,
            r_norm: u_lr + face_norm_p(&grad, ex.s_star)?,
            dq_sum,
            iterations: diag.iterations(),
            residual: diag.final_residual,
            clamped_cells: diag.clamped_cells,
        });
        diagnostics.push(diag);
        u_prev = state.u.clone();
        if keep(j) || j == spec.time.steps() {
            states.push((j, state));
        }
    }
    let storage_of = |u: &CellField| -> f64 {
        u.values
            .iter()
            .zip(&spec.phi.values)
            .map(|(u, p)| p * pow_odd(*u, lambda))
            .sum::<f64>()
            * vol
    };
    let (s_end, s_start) = (storage_of(&u_prev), storage_of(&spec.u0));
    let abs_storage: f64 = u_prev
        .values
        .iter()
        .chain(&spec.u0.values)
        .zip(spec.phi.values.iter().cycle())
        .map(|(u, p)| p * pow_odd(*u, lambda).abs())
        .sum::<f64>()
        * vol;
    let mass_balance = MassBalance {
        storage: s_end - s_start,
        net_supply,
        scale: (abs_storage + supply_scale).max(f64::MIN_POSITIVE),
    };
    Ok(TransientRun {
        states,
        monitors: RunMonitors {
            steps,
            diagnostics,
            mass_balance,
        },
    })
}

/// Largest relative defect of the mixed two-equation form over consecutive
/// stored states `(j - 1, j)`, measured against `1 + |rhs|` like the solver
/// tolerance.
pub fn mixed_residual_check(states: &[(usize, FieldState)], spec: &TransientSpec) -> Result<f64> {
    let zero = BoundaryData::zero();
    let mut worst = 0.0_f64;
    for pair in states.windows(2) {
        let (jp, prev) = (&pair[0].0, &pair[0].1);
        let (j, cur) = (pair[1].0, &pair[1].1);
        if j != jp + 1 {
            return Err(Error::Shape(format!(
                "states {jp} and {j} are not consecutive"
            )));
        }
        let rhs = spec.step_rhs(&prev.u, j);
        let p = MixedProblem {
            poly: &spec.poly,
            gas: &spec.gas,
            phi: &spec.phi,
            rhs: &rhs,
            mass_coeff: 1.0 / spec.time.h(),
            eps_zero_order: 0.0,
            eps_div: 0.0,
            bdata: &zero,
            t: spec.time.t(j),
        };
        worst = worst.max(p.defect(&cur.m, &cur.u)?.relative());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::cell_l2;
    use nalgebra::{DMatrix, DVector};
    use std::f64::consts::PI;

    fn spec(
        n: usize,
        poly: ForchheimerPolynomial,
        lambda: f64,
        t: f64,
        steps: usize,
    ) -> TransientSpec {
        let grid = StaggeredGrid::new_1d(1.0, n).unwrap();
        TransientSpec {
            grid,
            poly,
            gas: GasModel::from_lambda(lambda).unwrap(),
            phi: grid.cell_field(vec![1.0; n]).unwrap(),
            f: 0.0.into(),
            u0: grid.sample_cells(&Provider::new(|x, _| (PI * x[0]).sin()), 0.0),
            time: TimeGrid::new(t, steps).unwrap(),
            lipschitz_l: None,
        }
    }

    #[test]
    fn time_grid_hits_final_time() {
        let g = TimeGrid::new(0.3, 7).unwrap();
        assert_eq!(g.t(7), 0.3);
        assert_eq!(g.t(0), 0.0);
        assert!(TimeGrid::new(0.0, 0).is_err());
    }

    #[test]
    fn step_restriction_examples() {
        let mut s = spec(4, ForchheimerPolynomial::darcy(1.0).unwrap(), 0.5, 0.2, 1);
        assert!(s.validate_step().is_ok());
        s.time = TimeGrid::new(0.25, 1).unwrap();
        match s.validate_step() {
            Err(Error::StepRestriction { threshold, .. }) => assert_eq!(threshold, 0.25),
            other => panic!("{other:?}"),
        }
        s.time = TimeGrid::new(0.049, 1).unwrap();
        s.gas = GasModel::from_lambda(0.25).unwrap();
        s.phi = s.phi.map(|_| 0.4);
        assert!(s.validate_step().is_ok());
    }

    #[test]
    fn zero_data_zero_run() {
        let mut s = spec(5, ForchheimerPolynomial::darcy(1.0).unwrap(), 0.5, 0.1, 4);
        s.u0 = s.grid.zero_cells();
        let r = run(&s, &SolverConfig::default()).unwrap();
        assert!(r
            .states
            .iter()
            .all(|(_, st)| st.u.max() == 0.0 && st.m.max_abs() == 0.0));
        assert_eq!(mixed_residual_check(&r.states, &s).unwrap(), 0.0);
        assert_eq!(r.monitors.steps.len(), 4);
    }

    #[test]
    fn linear_heat_step_matches_dense_solve() {
        let n = 9;
        let s = spec(n, ForchheimerPolynomial::darcy(1.0).unwrap(), 1.0, 0.01, 1);
        let (st, _) = step(&s, &s.u0, 1, &SolverConfig::default()).unwrap();
        let h = s.time.h();
        let dx = 1.0 / n as f64;
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = 1.0 / h + if i == 0 || i == n - 1 { 3.0 } else { 2.0 } / (dx * dx);
            if i > 0 {
                a[(i, i - 1)] = -1.0 / (dx * dx);
            }
            if i + 1 < n {
                a[(i, i + 1)] = -1.0 / (dx * dx);
            }
        }
        let b = DVector::from_iterator(n, s.u0.values.iter().map(|u| u / h));
        let x = a.lu().solve(&b).unwrap();
        for i in 0..n {
            assert!((x[i] - st.u.values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn two_start_step_uniqueness() {
        let s = spec(
            16,
            ForchheimerPolynomial::constant(&[0.0, 1.0], &[1.0, 1.0]).unwrap(),
            0.5,
            0.1,
            10,
        );
        let cfg = SolverConfig::default();
        let (a, _) = step(&s, &s.u0, 1, &cfg).unwrap();
        let (b, _) = step_from(&s, &s.u0, 1, &s.grid.zero_cells(), &cfg).unwrap();
        assert!(cell_l2(&s.grid, &a.u.zip_map(&b.u, |x, y| x - y).unwrap().values) < 1e-8);
    }

    #[test]
    fn run_balances_mass_and_matches_mixed_form() {
        let mut s = spec(
            24,
            ForchheimerPolynomial::constant(&[0.0, 0.5, 1.0], &[1.0, 1.0, 1.0]).unwrap(),
            0.5,
            0.1,
            16,
        );
        s.f = Provider::new(|x, t| (1.0 + t) * x[0] * (1.0 - x[0]));
        let cfg = SolverConfig::default();
        let r = run(&s, &cfg).unwrap();
        let mb = r.monitors.mass_balance;
        assert!(mb.relative() < 1e-10, "{mb:?}");
        let d = mixed_residual_check(&r.states, &s).unwrap();
        assert!(d <= 10.0 * cfg.tol_residual, "{d}");
        let mut bad = r.states.clone();
        let last = bad.len() - 1;
        bad[last].1.u = bad[last].1.u.map(|v| v + 1e-3);
        assert!(mixed_residual_check(&bad, &s).unwrap() > 10.0 * cfg.tol_residual);
        assert!(r.states.iter().all(|(_, st)| st.u.min() >= 0.0));
        let m = &r.monitors.steps;
        assert!(m.windows(2).all(|w| w[1].dq_sum >= w[0].dq_sum));
    }

    #[test]
    fn invalid_specs_list_every_problem() {
        let mut s = spec(4, ForchheimerPolynomial::darcy(1.0).unwrap(), 0.5, 1.0, 2);
        s.u0 = s.u0.map(|v| v - 10.0);
        match s.validate() {
            Err(Error::Config(p)) => assert_eq!(p.len(), 2, "{p:?}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            run(&s, &SolverConfig::default()),
            Err(Error::StepRestriction { .. })
        ));
    }
}
