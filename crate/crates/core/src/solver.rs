//! Nonlinear solver for the cell-centered primal system
//!
//! ```text
//! mass_coeff * phi * pi(u) + eps * pi(u) + div m(u) = rhs,   m = -K(|grad u|) grad u,
//! ```
//!
//! with `pi(u) = sign(u) |u|^lambda`. Each face flux depends only on the
//! normal difference quotient across it, so the system is a monotone
//! function of `u` and its linearizations are symmetric positive definite.
//!
//! Iteration schedule: damped Picard (secant conductivities `K`) until the
//! residual has dropped tenfold, then Newton (tangent conductivities
//! `d calF^{-1}/d xi`) with backtracking. A failed Newton line search falls
//! back to Picard.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{face_gradient, BoundaryData, CellField, Face, FaceField, StaggeredGrid};
use crate::linalg::BandedMatrix;
use crate::model::{pow_odd, ForchheimerPolynomial, GasModel, LocalPolynomial};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolver {
    /// Banded Gaussian elimination.
    Direct,
    /// Jacobi-preconditioned conjugate gradient.
    Cg { tol: f64, max_iter: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub picard_max: usize,
    pub newton_max: usize,
    /// Relative tolerance: stop when `|R| <= tol (1 + |rhs|)` in the
    /// volume-weighted 2-norm.
    pub tol_residual: f64,
    /// Jacobian smoothing of `pi'` at zero, relative to the solution scale.
    pub delta_smoothing: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub linear_solver: LinearSolver,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            picard_max: 50,
            newton_max: 50,
            tol_residual: 1e-11,
            delta_smoothing: 1e-8,
            backtrack_factor: 0.5,
            max_backtracks: 40,
            linear_solver: LinearSolver::Direct,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.tol_residual > 0.0) {
            problems.push(format!("tol_residual = {} must be > 0", self.tol_residual));
        }
        if self.picard_max + self.newton_max == 0 {
            problems.push("picard_max + newton_max must be >= 1".to_string());
        }
        if !(self.delta_smoothing >= 0.0) {
            problems.push(format!(
                "delta_smoothing = {} must be >= 0",
                self.delta_smoothing
            ));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            problems.push(format!(
                "backtrack_factor = {} must lie in (0, 1)",
                self.backtrack_factor
            ));
        }
        if let LinearSolver::Cg { tol, max_iter } = self.linear_solver {
            if !(tol > 0.0) || max_iter == 0 {
                problems.push("cg needs tol > 0 and max_iter >= 1".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Initial,
    Picard,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub residual: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveDiagnostics {
    pub picard_iterations: usize,
    pub newton_iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    /// Convergence threshold `tol (1 + |rhs|)`.
    pub target: f64,
    pub history: Vec<IterationRecord>,
    /// Some cell had `|u|` below the smoothing width of `pi'`.
    pub derivative_clamped: bool,
    /// Some flux inversion rejected a Newton step in favour of bisection.
    pub bracket_fallback: bool,
    pub newton_fallbacks: usize,
    /// Cells clamped from a small negative value to zero after convergence.
    pub clamped_cells: usize,
}

impl SolveDiagnostics {
    pub fn iterations(&self) -> usize {
        self.picard_iterations + self.newton_iterations
    }

    /// CSV with columns `iteration,phase,residual,damping`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for rec in &self.history {
            w.serialize(rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The generic cell system solved at every stationary and transient stage.
#[derive(Debug, Clone, Copy)]
pub struct PrimalProblem<'a> {
    pub poly: &'a ForchheimerPolynomial,
    pub gas: &'a GasModel,
    pub phi: &'a CellField,
    pub rhs: &'a CellField,
    pub mass_coeff: f64,
    pub eps_zero_order: f64,
    pub bdata: &'a BoundaryData,
    pub t: f64,
}

/// Volume-weighted 2-norm of cell values.
pub fn cell_l2(grid: &StaggeredGrid, v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * grid.cell_volume()).sqrt()
}

/// A [`PrimalProblem`] with coefficients frozen at every face.
#[derive(Debug, Clone)]
pub struct PrimalSystem<'a> {
    problem: PrimalProblem<'a>,
    grid: StaggeredGrid,
    faces: Vec<Face>,
    face_polys: Vec<LocalPolynomial>,
    /// Diagonal weight of `pi(u)` per cell.
    accumulation: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linearization {
    Picard,
    Newton,
}

impl<'a> PrimalProblem<'a> {
    pub fn assemble(&self) -> Result<PrimalSystem<'a>> {
        let grid = *self.phi.grid();
        if self.rhs.grid() != &grid {
            return Err(Error::Shape("rhs and phi live on different grids".into()));
        }
        if !(self.mass_coeff >= 0.0 && self.eps_zero_order >= 0.0) {
            return Err(Error::config("mass_coeff and eps_zero_order must be >= 0"));
        }
        let faces = grid.faces();
        let face_polys = faces
            .iter()
            .map(|f| self.poly.at(f.midpoint, self.t))
            .collect::<Result<Vec<_>>>()?;
        let accumulation = self
            .phi
            .values
            .iter()
            .map(|p| self.mass_coeff * p + self.eps_zero_order)
            .collect();
        Ok(PrimalSystem {
            problem: *self,
            grid,
            faces,
            face_polys,
            accumulation,
        })
    }

    pub fn residual(&self, u: &CellField) -> Result<CellField> {
        let sys = self.assemble()?;
        let r = sys.residual(&u.values)?;
        CellField::new(sys.grid, r)
    }

    pub fn recover_flux(&self, u: &CellField) -> Result<FaceField> {
        self.assemble()?.flux(&u.values)
    }

    pub fn solve(
        &self,
        u_init: &CellField,
        cfg: &SolverConfig,
    ) -> Result<(CellField, SolveDiagnostics)> {
        self.assemble()?.solve(u_init, cfg)
    }
}

/// Solves the primal cell system starting from `u_init`.
pub fn solve_primal_system(
    problem: &PrimalProblem<'_>,
    u_init: &CellField,
    cfg: &SolverConfig,
) -> Result<(CellField, SolveDiagnostics)> {
    problem.solve(u_init, cfg)
}

/// `m = -K(|grad u|) grad u` on every face, with `t` fixing the coefficients
/// and boundary trace.
pub fn recover_flux(
    u: &CellField,
    poly: &ForchheimerPolynomial,
    bdata: &BoundaryData,
    t: f64,
) -> Result<FaceField> {
    let grid = *u.grid();
    let mut m = grid.zero_faces();
    for f in grid.faces() {
        let g = face_gradient(&grid, &f, &u.values, bdata, t);
        let local = poly.at(f.midpoint, t)?;
        m.set(&f, -local.conductivity(g.abs())? * g);
    }
    Ok(m)
}

struct FaceState {
    /// Normal difference quotient.
    grad: f64,
    /// `calF^{-1}(|grad|)`
    s: f64,
}

impl<'a> PrimalSystem<'a> {
    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.grid.num_cells() {
            return Err(Error::Shape(format!(
                "{} values for {} cells",
                u.len(),
                self.grid.num_cells()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite iterate".into()));
        }
        Ok(())
    }

    fn face_states(&self, u: &[f64], bisected: &mut bool) -> Result<Vec<FaceState>> {
        self.faces
            .iter()
            .zip(&self.face_polys)
            .map(|(f, p)| {
                let grad = face_gradient(&self.grid, f, u, self.problem.bdata, self.problem.t);
                let inv = p.invert_calf_traced(grad.abs())?;
                *bisected |= inv.bisected;
                Ok(FaceState { grad, s: inv.s })
            })
            .collect()
    }

    /// Face fluxes `m = -K(|g|) g`.
    pub fn flux(&self, u: &[f64]) -> Result<FaceField> {
        self.check_len(u)?;
        let mut m = self.grid.zero_faces();
        let mut bisected = false;
        for ((f, st), p) in self
            .faces
            .iter()
            .zip(self.face_states(u, &mut bisected)?)
            .zip(&self.face_polys)
        {
            m.set(f, -st.grad / p.f(st.s));
        }
        Ok(m)
    }

    pub fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut flag = false;
        self.residual_flagged(u, &mut flag)
    }

    fn residual_flagged(&self, u: &[f64], bisected: &mut bool) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let lambda = self.problem.gas.lambda();
        let mut r: Vec<f64> = u
            .iter()
            .zip(&self.accumulation)
            .zip(&self.problem.rhs.values)
            .map(|((&u, &w), &b)| w * pow_odd(u, lambda) - b)
            .collect();
        for ((f, st), p) in self
            .faces
            .iter()
            .zip(self.face_states(u, bisected)?)
            .zip(&self.face_polys)
        {
            let m = -st.grad / p.f(st.s);
            let v = m / self.grid.spacing()[f.axis];
            if let Some(l) = f.minus {
                r[l] += v;
            }
            if let Some(rr) = f.plus {
                r[rr] -= v;
            }
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite residual".into()));
        }
        Ok(r)
    }

    /// Picard (secant `K`) or Newton (tangent `1 / calF'`) matrix.
    pub fn jacobian(&self, u: &[f64], kind: Linearization, delta: f64) -> Result<BandedMatrix> {
        self.check_len(u)?;
        let n = self.grid.num_cells();
        let bw = if self.grid.dim() == 1 {
            1
        } else {
            self.grid.cells()[0]
        };
        let mut a = BandedMatrix::zeros(n, bw);
        let lambda = self.problem.gas.lambda();
        for (c, (&uc, &w)) in u.iter().zip(&self.accumulation).enumerate() {
            a.add(c, c, w * smoothed_pi_derivative(uc, lambda, delta));
        }
        let mut bisected = false;
        for ((f, st), p) in self
            .faces
            .iter()
            .zip(self.face_states(u, &mut bisected)?)
            .zip(&self.face_polys)
        {
            let cond = match kind {
                Linearization::Picard => 1.0 / p.f(st.s),
                Linearization::Newton => p.flux_slope_at(st.s),
            };
            let h = self.grid.spacing()[f.axis];
            match (f.minus, f.plus) {
                (Some(l), Some(r)) => {
                    let k = cond / (h * h);
                    a.add(l, l, k);
                    a.add(r, r, k);
                    a.add(l, r, -k);
                    a.add(r, l, -k);
                }
                (Some(c), None) | (None, Some(c)) => a.add(c, c, 2.0 * cond / (h * h)),
                (None, None) => unreachable!(),
            }
        }
        Ok(a)
    }

    fn norm(&self, r: &[f64]) -> f64 {
        cell_l2(&self.grid, r)
    }

    fn linear_solve(&self, a: &BandedMatrix, b: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
        match cfg.linear_solver {
            LinearSolver::Direct => a.solve(b),
            LinearSolver::Cg { tol, max_iter } => a.solve_cg(b, tol, max_iter),
        }
    }

    fn smoothing_width(&self, u: &[f64], cfg: &SolverConfig) -> f64 {
        let umax = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let gmax = self
            .faces
            .iter()
            .filter_map(|f| {
                f.boundary.map(|side| {
                    self.problem
                        .bdata
                        .eval(side, f.midpoint, self.problem.t)
                        .abs()
                })
            })
            .fold(0.0_f64, f64::max);
        cfg.delta_smoothing * umax.max(gmax).max(1e-300)
    }

    /// Runs the Picard/Newton schedule from `u_init`.
    pub fn solve(
        &self,
        u_init: &CellField,
        cfg: &SolverConfig,
    ) -> Result<(CellField, SolveDiagnostics)> {
        cfg.validate()?;
        if u_init.grid() != &self.grid {
            return Err(Error::Shape(
                "initial guess lives on a different grid".into(),
            ));
        }
        let mut u = u_init.values.clone();
        let mut diag = SolveDiagnostics::default();
        let mut bisected = false;
        let mut r = self.residual_flagged(&u, &mut bisected)?;
        let mut rn = self.norm(&r);
        diag.initial_residual = rn;
        diag.target = cfg.tol_residual * (1.0 + self.norm(&self.problem.rhs.values));
        diag.history.push(IterationRecord {
            iteration: 0,
            phase: Phase::Initial,
            residual: rn,
            damping: 0.0,
        });

        let mut phase = if cfg.picard_max > 0 {
            Phase::Picard
        } else {
            Phase::Newton
        };
        let mut picard_goal = 0.1 * rn;
        let mut iteration = 0;
        while rn > diag.target {
            if phase == Phase::Picard && diag.picard_iterations >= cfg.picard_max {
                phase = Phase::Newton;
            }
            if phase == Phase::Newton && diag.newton_iterations >= cfg.newton_max {
                return Err(Error::NonConvergence {
                    context: "primal solve".into(),
                    iterations: diag.iterations(),
                    residual: rn,
                });
            }
            let kind = match phase {
                Phase::Newton => Linearization::Newton,
                _ => Linearization::Picard,
            };
            let delta = self.smoothing_width(&u, cfg);
            if u.iter().any(|v| v.abs() < delta) && self.problem.gas.lambda() < 1.0 {
                diag.derivative_clamped = true;
            }
            let a = self.jacobian(&u, kind, delta)?;
            let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
            let step = self.linear_solve(&a, &neg_r, cfg);
            iteration += 1;
            let accepted = match step {
                Ok(step) => self.line_search(&u, &step, delta, rn, cfg, &mut bisected)?,
                Err(e) if phase == Phase::Picard => return Err(e),
                Err(_) => None,
            };
            match (phase, accepted) {
                (Phase::Newton, Some((nu, nr, nrn, theta))) => {
                    diag.newton_iterations += 1;
                    u = nu;
                    r = nr;
                    rn = nrn;
                    diag.history.push(IterationRecord {
                        iteration,
                        phase,
                        residual: rn,
                        damping: theta,
                    });
                }
                (Phase::Newton, None) => {
                    diag.newton_iterations += 1;
                    diag.newton_fallbacks += 1;
                    if diag.picard_iterations >= cfg.picard_max {
                        return Err(Error::NonConvergence {
                            context:
                                "primal solve (Newton line search failed, Picard budget spent)"
                                    .into(),
                            iterations: diag.iterations(),
                            residual: rn,
                        });
                    }
                    phase = Phase::Picard;
                    picard_goal = 0.1 * rn;
                }
                (_, Some((nu, nr, nrn, theta))) => {
                    diag.picard_iterations += 1;
                    u = nu;
                    r = nr;
                    rn = nrn;
                    diag.history.push(IterationRecord {
                        iteration,
                        phase: Phase::Picard,
                        residual: rn,
                        damping: theta,
                    });
                    if rn <= picard_goal && cfg.newton_max > diag.newton_iterations {
                        phase = Phase::Newton;
                    }
                }
                (_, None) => {
                    diag.picard_iterations += 1;
                    if cfg.newton_max > diag.newton_iterations {
                        phase = Phase::Newton;
                    } else {
                        return Err(Error::NonConvergence {
                            context: "primal solve (Picard line search failed)".into(),
                            iterations: diag.iterations(),
                            residual: rn,
                        });
                    }
                }
            }
        }
        diag.final_residual = rn;
        diag.bracket_fallback = bisected;
        Ok((CellField::new(self.grid, u)?, diag))
    }

    /// Backtracking on the residual norm; returns the accepted iterate.
    #[allow(clippy::type_complexity)]
    fn line_search(
        &self,
        u: &[f64],
        step: &[f64],
        delta: f64,
        rn: f64,
        cfg: &SolverConfig,
        bisected: &mut bool,
    ) -> Result<Option<(Vec<f64>, Vec<f64>, f64, f64)>> {
        let lambda = self.problem.gas.lambda();
        // With an accumulation term present the step is taken in w = pi(u),
        // where pi^{-1} is smooth; near u = 0 this is the step -R / A.
        let in_w = lambda < 1.0 && self.accumulation.iter().all(|&a| a > 0.0);
        let (base, dir): (Vec<f64>, Vec<f64>) = if in_w {
            u.iter()
                .zip(step)
                .map(|(&a, &d)| {
                    (
                        pow_odd(a, lambda),
                        smoothed_pi_derivative(a, lambda, delta) * d,
                    )
                })
                .unzip()
        } else {
            (u.to_vec(), step.to_vec())
        };
        let mut theta = 1.0;
        for _ in 0..=cfg.max_backtracks {
            let trial: Vec<f64> = base
                .iter()
                .zip(&dir)
                .map(|(a, d)| {
                    let v = a + theta * d;
                    if in_w {
                        pow_odd(v, 1.0 / lambda)
                    } else {
                        v
                    }
                })
                .collect();
            if trial.iter().all(|v| v.is_finite()) {
                if let Ok(tr) = self.residual_flagged(&trial, bisected) {
                    let trn = self.norm(&tr);
                    if trn < (1.0 - 1e-4 * theta) * rn {
                        return Ok(Some((trial, tr, trn, theta)));
                    }
                }
            }
            theta *= cfg.backtrack_factor;
        }
        Ok(None)
    }
}

/// `lambda (u^2 + delta^2)^((lambda - 1) / 2)`, the smoothed derivative of
/// `sign(u)|u|^lambda`; exact for `lambda = 1`.
#[inline]
pub fn smoothed_pi_derivative(u: f64, lambda: f64, delta: f64) -> f64 {
    if lambda == 1.0 {
        return 1.0;
    }
    let q = u * u + delta * delta;
    if q == 0.0 {
        // no smoothing requested at an exact zero: use a large finite slope
        return lambda * f64::MIN_POSITIVE.powf((lambda - 1.0) / 2.0).min(1e150);
    }
    lambda * q.powf((lambda - 1.0) / 2.0)
}
