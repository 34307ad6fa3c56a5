//! Steady flow with Dirichlet data `u = -u_b`, reached through the
//! regularized family
//!
//! ```text
//! eps pi(u) + div m = f,    m = -K(|grad u|) grad u
//! ```
//!
//! as `eps` decreases along a schedule, each solve warm-started from the
//! previous one. A final `eps = 0` solve closes the continuation.
//!
//! In [`StationaryMode::Primal`] the flux is eliminated and the
//! `eps |div m|^{r*-2} div m` term is dropped. [`StationaryMode::MixedRegularized`]
//! keeps it and solves for `(m, u)` jointly.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{
    cell_norm_p, divergence, face_norm_p, BoundaryData, CellField, FieldState, StaggeredGrid,
};
use crate::mixed::MixedProblem;
use crate::model::{derive_exponents, ForchheimerPolynomial, GasModel};
use crate::provider::Provider;
use crate::solver::{cell_l2, PrimalProblem, SolveDiagnostics, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryMode {
    #[default]
    Primal,
    MixedRegularized,
}

#[derive(Debug, Clone)]
pub struct StationarySpec {
    pub grid: StaggeredGrid,
    pub poly: ForchheimerPolynomial,
    pub gas: GasModel,
    pub f: Provider,
    /// Boundary datum; the trace imposed on `u` is `-u_b`.
    pub u_b: Provider,
    pub epsilon_schedule: Vec<f64>,
    pub mode: StationaryMode,
}

/// `1e-2, 1e-3, ..., 1e-10`
pub fn default_schedule() -> Vec<f64> {
    (2..=10).map(|k| 10f64.powi(-k)).collect()
}

impl StationarySpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let sched = &self.epsilon_schedule;
        if sched.is_empty() {
            problems.push("epsilon_schedule is empty".to_string());
        }
        if sched.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            problems.push("epsilon_schedule entries must be positive and finite".to_string());
        }
        if sched.windows(2).any(|w| !(w[1] < w[0])) {
            problems.push("epsilon_schedule must be strictly decreasing".to_string());
        }
        if let Some(&last) = sched.last() {
            if last > 1e-8 {
                problems.push(format!("last epsilon {last:e} must be <= 1e-8"));
            }
        }
        if self
            .grid
            .cell_centers()
            .any(|x| !self.f.eval(x, 0.0).is_finite())
        {
            problems.push("f is not finite on the cell centers".to_string());
        }
        let bad_trace = self
            .grid
            .faces()
            .iter()
            .filter(|f| f.boundary.is_some())
            .any(|f| !self.u_b.eval(f.midpoint, 0.0).is_finite());
        if bad_trace {
            problems.push("u_b is not finite on the boundary faces".to_string());
        }
        if let Err(Error::Config(p)) = self
            .poly
            .validate_coefficients(self.grid.faces().iter().map(|f| (f.midpoint, 0.0)))
        {
            problems.extend(p);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn boundary(&self) -> BoundaryData {
        BoundaryData::from_negated(self.u_b.clone())
    }

    fn source(&self) -> CellField {
        self.grid.sample_cells(&self.f, 0.0)
    }

    fn ones(&self) -> CellField {
        self.grid
            .cell_field(vec![1.0; self.grid.num_cells()])
            .expect("finite")
    }
}

/// Solves the regularized problem at one `eps`, in the mode of `spec`.
pub fn solve_regularized_stationary(
    spec: &StationarySpec,
    eps: f64,
    init: &FieldState,
    cfg: &SolverConfig,
) -> Result<(FieldState, SolveDiagnostics)> {
    if !(eps > 0.0) {
        return Err(Error::Domain {
            what: "eps",
            value: eps,
        });
    }
    solve_at(spec, eps, spec.mode, init, cfg)
}

fn solve_at(
    spec: &StationarySpec,
    eps: f64,
    mode: StationaryMode,
    init: &FieldState,
    cfg: &SolverConfig,
) -> Result<(FieldState, SolveDiagnostics)> {
    let bdata = spec.boundary();
    let rhs = spec.source();
    let phi = spec.ones();
    match mode {
        StationaryMode::Primal => {
            let p = PrimalProblem {
                poly: &spec.poly,
                gas: &spec.gas,
                phi: &phi,
                rhs: &rhs,
                mass_coeff: 0.0,
                eps_zero_order: eps,
                bdata: &bdata,
                t: 0.0,
            };
            let (u, d) = p.solve(&init.u, cfg)?;
            let m = p.recover_flux(&u)?;
            Ok((FieldState { u, m }, d))
        }
        StationaryMode::MixedRegularized => {
            let p = MixedProblem {
                poly: &spec.poly,
                gas: &spec.gas,
                phi: &phi,
                rhs: &rhs,
                mass_coeff: 0.0,
                eps_zero_order: eps,
                eps_div: eps,
                bdata: &bdata,
                t: 0.0,
            };
            let (m, u, d) = p.solve_from(&init.m, &init.u, cfg)?;
            Ok((FieldState { u, m }, d))
        }
    }
}

/// Discrete versions of the eps-independent bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryBounds {
    pub u_lr: f64,
    pub m_ls: f64,
    pub div_m_lrstar: f64,
}

impl StationaryBounds {
    pub fn as_array(&self) -> [f64; 3] {
        [self.u_lr, self.m_ls, self.div_m_lrstar]
    }
}

pub fn monitor_stationary_bounds(
    state: &FieldState,
    spec: &StationarySpec,
) -> Result<StationaryBounds> {
    let ex = derive_exponents(&spec.poly, &spec.gas);
    Ok(StationaryBounds {
        u_lr: cell_norm_p(&state.u, ex.r)?,
        m_ls: face_norm_p(&state.m, ex.s)?,
        div_m_lrstar: cell_norm_p(&divergence(&state.m), ex.r_star)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuationStep {
    pub eps: f64,
    /// `|u_eps - u_prev_eps|` in the volume-weighted 2-norm; absent for the
    /// first entry.
    pub delta: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub u_lr: f64,
    pub m_ls: f64,
    pub div_m_lrstar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationReport {
    pub steps: Vec<ContinuationStep>,
    /// Change produced by the closing `eps = 0` solve.
    pub limit_delta: f64,
    /// Residual of the unregularized system at the returned state.
    pub limit_residual: f64,
    pub limit_diagnostics: SolveDiagnostics,
}

impl ContinuationReport {
    pub fn deltas(&self) -> Vec<f64> {
        self.steps.iter().filter_map(|s| s.delta).collect()
    }

    /// Ratio of the largest to the smallest value of each monitored norm
    /// over the schedule. A norm that vanishes with `eps` (its last value
    /// below `1e-6` of its largest) is bounded trivially and reported as
    /// `None`.
    pub fn norm_spreads(&self) -> [Option<f64>; 3] {
        let mut out = [Some(1.0); 3];
        for (k, o) in out.iter_mut().enumerate() {
            let vals: Vec<f64> = self
                .steps
                .iter()
                .map(|s| [s.u_lr, s.m_ls, s.div_m_lrstar][k])
                .collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(0.0, f64::max);
            let last = vals.last().copied().unwrap_or(0.0);
            *o = if hi == 0.0 {
                Some(1.0)
            } else if last < 1e-6 * hi {
                None
            } else {
                Some(hi / lo)
            };
        }
        out
    }

    /// CSV with one row per eps: `eps,delta,iterations,residual,u_lr,m_ls,div_m_lrstar`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.steps {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Continuation along `spec.epsilon_schedule` from the zero state.
pub fn solve_stationary(
    spec: &StationarySpec,
    cfg: &SolverConfig,
) -> Result<(FieldState, ContinuationReport)> {
    solve_stationary_from(spec, &FieldState::zero(&spec.grid), cfg)
}

pub fn solve_stationary_from(
    spec: &StationarySpec,
    init: &FieldState,
    cfg: &SolverConfig,
) -> Result<(FieldState, ContinuationReport)> {
    spec.validate()?;
    let mut state = init.clone();
    let mut steps = Vec::with_capacity(spec.epsilon_schedule.len());
    for (k, &eps) in spec.epsilon_schedule.iter().enumerate() {
        let (next, diag) =
            solve_regularized_stationary(spec, eps, &state, cfg).map_err(|e| name_eps(e, eps))?;
        let bounds = monitor_stationary_bounds(&next, spec)?;
        let delta = (k > 0).then(|| {
            cell_l2(
                &spec.grid,
                &next
                    .u
                    .zip_map(&state.u, |a, b| a - b)
                    .expect("same grid")
                    .values,
            )
        });
        steps.push(ContinuationStep {
            eps,
            delta,
            iterations: diag.iterations(),
            residual: diag.final_residual,
            u_lr: bounds.u_lr,
            m_ls: bounds.m_ls,
            div_m_lrstar: bounds.div_m_lrstar,
        });
        state = next;
    }
    let (limit, limit_diagnostics) =
        solve_at(spec, 0.0, spec.mode, &state, cfg).map_err(|e| name_eps(e, 0.0))?;
    let limit_delta = cell_l2(
        &spec.grid,
        &limit
            .u
            .zip_map(&state.u, |a, b| a - b)
            .expect("same grid")
            .values,
    );
    let limit_residual = stationary_residual(spec, &limit)?;
    Ok((
        limit,
        ContinuationReport {
            steps,
            limit_delta,
            limit_residual,
            limit_diagnostics,
        },
    ))
}

/// Volume-weighted residual of `div m(u) = f` at `state.u`.
pub fn stationary_residual(spec: &StationarySpec, state: &FieldState) -> Result<f64> {
    let bdata = spec.boundary();
    let rhs = spec.source();
    let phi = spec.ones();
    let p = PrimalProblem {
        poly: &spec.poly,
        gas: &spec.gas,
        phi: &phi,
        rhs: &rhs,
        mass_coeff: 0.0,
        eps_zero_order: 0.0,
        bdata: &bdata,
        t: 0.0,
    };
    Ok(cell_l2(&spec.grid, &p.residual(&state.u)?.values))
}

fn name_eps(e: Error, eps: f64) -> Error {
    match e {
        Error::NonConvergence {
            context,
            iterations,
            residual,
        } => Error::NonConvergence {
            context: format!("{context} at eps = {eps:e}"),
            iterations,
            residual,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn darcy_spec(n: usize, mode: StationaryMode) -> StationarySpec {
        StationarySpec {
            grid: StaggeredGrid::new_1d(1.0, n).unwrap(),
            poly: ForchheimerPolynomial::darcy(1.0).unwrap(),
            gas: GasModel::from_lambda(0.5).unwrap(),
            f: 0.0.into(),
            u_b: Provider::new(|x, _| -x[0]),
            epsilon_schedule: default_schedule(),
            mode,
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let mut spec = darcy_spec(6, StationaryMode::Primal);
        spec.u_b = 0.0.into();
        let (s, rep) = solve_stationary(&spec, &SolverConfig::default()).unwrap();
        assert_eq!(s.u.max(), 0.0);
        assert_eq!(s.m.max_abs(), 0.0);
        assert!(rep.steps.iter().all(|s| s.u_lr == 0.0));
    }

    #[test]
    fn darcy_linear_limit() {
        for mode in [StationaryMode::Primal, StationaryMode::MixedRegularized] {
            let spec = darcy_spec(8, mode);
            let (s, rep) = solve_stationary(&spec, &SolverConfig::default()).unwrap();
            for (c, v) in s.u.values.iter().enumerate() {
                assert!((v - spec.grid.cell_center(c)[0]).abs() < 1e-10);
            }
            let d = rep.deltas();
            assert!(d.windows(2).all(|w| w[1] < w[0]), "{mode:?} {d:?}");
            assert!(rep.limit_residual < 1e-11);
            let b = monitor_stationary_bounds(&s, &spec).unwrap();
            assert!((b.m_ls - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn regularized_constant_flux() {
        let spec = StationarySpec {
            poly: ForchheimerPolynomial::constant(&[0.0, 1.0], &[1.0, 1.0]).unwrap(),
            u_b: Provider::new(|x, _| 6.0 * x[0]),
            ..darcy_spec(10, StationaryMode::Primal)
        };
        let (s, _) = solve_regularized_stationary(
            &spec,
            1e-10,
            &FieldState::zero(&spec.grid),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(s.m.axes[0].iter().all(|v| (v - 2.0).abs() < 1e-8));
    }

    #[test]
    fn modes_agree_at_small_eps() {
        let base = StationarySpec {
            poly: ForchheimerPolynomial::constant(&[0.0, 0.5, 1.0], &[1.0, 1.0, 1.0]).unwrap(),
            f: Provider::new(|x, _| 1.0 + (3.0 * x[0]).sin()),
            u_b: Provider::new(|x, _| -0.5 * x[0]),
            ..darcy_spec(12, StationaryMode::Primal)
        };
        let mixed = StationarySpec {
            mode: StationaryMode::MixedRegularized,
            ..base.clone()
        };
        let z = FieldState::zero(&base.grid);
        let cfg = SolverConfig::default();
        let (a, _) = solve_regularized_stationary(&base, 1e-8, &z, &cfg).unwrap();
        let (b, _) = solve_regularized_stationary(&mixed, 1e-8, &z, &cfg).unwrap();
        assert!(cell_l2(&base.grid, &a.u.zip_map(&b.u, |x, y| x - y).unwrap().values) < 1e-6);
    }

    #[test]
    fn schedule_validation() {
        let mut spec = darcy_spec(4, StationaryMode::Primal);
        spec.epsilon_schedule = vec![1e-2, 1e-2, 1e-3];
        match spec.validate() {
            Err(Error::Config(p)) => assert_eq!(p.len(), 2),
            other => panic!("{other:?}"),
        }
        assert!(solve_regularized_stationary(
            &spec,
            0.0,
            &FieldState::zero(&spec.grid),
            &SolverConfig::default()
        )
        .is_err());
    }
}
