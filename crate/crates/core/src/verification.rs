//! Manufactured solutions, convergence tables and a brute-force oracle for
//! tiny transient steps.
//!
//! Sources are manufactured numerically: nested fourth-order central
//! differences of the exact solution and of the composed flux
//! `-K(|grad u|) grad u`, since `K` has no closed form in general.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{cell_norm_p, face_norm_p, CellField, FaceField, StaggeredGrid};
use crate::model::{derive_exponents, pow_odd, ForchheimerPolynomial, GasModel};
use crate::provider::{Point, Provider};
use crate::solver::SolverConfig;
use crate::stationary::{solve_stationary, StationaryMode, StationarySpec};
use crate::transient::{run_keeping, TimeGrid, TransientSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    Transient {
        t_final: f64,
    },
    /// Steady state with the trace of the exact solution as boundary data.
    Stationary,
}

#[derive(Debug, Clone)]
pub struct ManufacturedProblem {
    pub name: String,
    pub exact_u: Provider,
    pub poly: ForchheimerPolynomial,
    pub gas: GasModel,
    pub phi: Provider,
    pub dim: usize,
    pub extents: [f64; 2],
    pub kind: ProblemKind,
    /// Finite-difference step relative to the domain size (space) and to
    /// one time unit.
    pub stencil_step: f64,
}

/// Fourth-order central first derivative.
fn d5(g: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (g(x - 2.0 * h) - 8.0 * g(x - h) + 8.0 * g(x + h) - g(x + 2.0 * h)) / (12.0 * h)
}

impl ManufacturedProblem {
    fn steps(&self) -> ([f64; 2], f64) {
        (
            [
                self.stencil_step * self.extents[0],
                self.stencil_step * self.extents[1],
            ],
            self.stencil_step,
        )
    }

    fn shift(x: Point, axis: usize, d: f64) -> Point {
        let mut y = x;
        y[axis] += d;
        y
    }

    /// Gradient of the exact solution by central differences.
    pub fn exact_gradient(&self, x: Point, t: f64) -> [f64; 2] {
        let (hx, _) = self.steps();
        let mut g = [0.0; 2];
        for (k, gk) in g.iter_mut().enumerate().take(self.dim) {
            *gk = d5(|s| self.exact_u.eval(Self::shift(x, k, s), t), 0.0, hx[k]);
        }
        g
    }

    /// `-K(|grad u|) grad u` at a point.
    pub fn exact_flux(&self, x: Point, t: f64) -> Result<[f64; 2]> {
        let g = self.exact_gradient(x, t);
        let xi = (g[0] * g[0] + g[1] * g[1]).sqrt();
        let k = self.poly.eval_k(x, t, xi)?;
        Ok([-k * g[0], -k * g[1]])
    }

    pub fn source_provider(&self) -> Provider {
        let me = Arc::new(self.clone());
        Provider::new(move |x, t| manufacture_source(&me, x, t).unwrap_or(f64::NAN))
    }

    /// The exact solution vanishes on sampled boundary points.
    pub fn check_zero_trace(&self, samples: usize, t: f64) -> bool {
        let mut pts = Vec::new();
        for i in 0..=samples {
            let s = i as f64 / samples as f64;
            pts.push([0.0, s * self.extents[1]]);
            pts.push([self.extents[0], s * self.extents[1]]);
            if self.dim == 2 {
                pts.push([s * self.extents[0], 0.0]);
                pts.push([s * self.extents[0], self.extents[1]]);
            }
        }
        pts.iter().all(|&p| self.exact_u.eval(p, t).abs() <= 1e-12)
    }

    fn grid(&self, cells: usize) -> Result<StaggeredGrid> {
        match self.dim {
            1 => StaggeredGrid::new_1d(self.extents[0], cells),
            2 => StaggeredGrid::new_2d(self.extents, [cells, cells]),
            d => Err(Error::config(format!("dimension {d} not supported"))),
        }
    }
}

/// `phi d_t(u^lambda) - div(K(|grad u|) grad u)` at `(x, t)`; the time term
/// is omitted for stationary problems.
pub fn manufacture_source(problem: &ManufacturedProblem, x: Point, t: f64) -> Result<f64> {
    let (hx, ht) = problem.steps();
    let mut div = 0.0;
    for (k, &h) in hx.iter().enumerate().take(problem.dim) {
        let q: Vec<f64> = [-2.0, -1.0, 1.0, 2.0]
            .iter()
            .map(|&m| Ok(problem.exact_flux(ManufacturedProblem::shift(x, k, m * h), t)?[k]))
            .collect::<Result<_>>()?;
        div += (q[0] - 8.0 * q[1] + 8.0 * q[2] - q[3]) / (12.0 * h);
    }
    let time_term = match problem.kind {
        ProblemKind::Stationary => 0.0,
        ProblemKind::Transient { .. } => {
            let lambda = problem.gas.lambda();
            problem.phi.eval(x, t)
                * d5(|s| pow_odd(problem.exact_u.eval(x, t + s), lambda), 0.0, ht)
        }
    };
    let f = time_term + div;
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::Numerical(format!(
            "non-finite manufactured source at {x:?}, t = {t}"
        )))
    }
}

/// One refinement level: cells per axis and time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Level {
    pub cells: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub steps: usize,
    pub h_space: f64,
    pub h_time: f64,
    pub error_u_lr: f64,
    pub error_m_ls: f64,
    /// Observed order of the `u` error against the previous row; absent on
    /// the first row or when errors are at round-off.
    pub observed_order: Option<f64>,
    pub observed_order_m: Option<f64>,
    /// Relative mass-balance defect of the run; zero for stationary levels.
    pub mass_balance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub problem: String,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.observed_order).collect()
    }

    /// Columns `cells,steps,h_space,h_time,error_u_lr,error_m_ls,observed_order,observed_order_m,mass_balance`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Errors below this are treated as exact and get no observed order.
const ROUNDOFF_ERROR: f64 = 1e-10;

fn order(e0: f64, e1: f64, ratio: f64) -> Option<f64> {
    (e0 > ROUNDOFF_ERROR && e1 > ROUNDOFF_ERROR && ratio > 1.0).then(|| (e0 / e1).ln() / ratio.ln())
}

/// Transient spec for one refinement level of a transient problem.
pub fn transient_spec(problem: &ManufacturedProblem, level: Level) -> Result<TransientSpec> {
    let ProblemKind::Transient { t_final } = problem.kind else {
        return Err(Error::config("not a transient problem"));
    };
    if !problem.check_zero_trace(16, 0.0) || !problem.check_zero_trace(16, t_final) {
        return Err(Error::config(format!(
            "{}: exact solution has a nonzero trace",
            problem.name
        )));
    }
    let grid = problem.grid(level.cells)?;
    Ok(TransientSpec {
        grid,
        poly: problem.poly.clone(),
        gas: problem.gas,
        phi: grid.sample_cells(&problem.phi, 0.0),
        f: problem.source_provider(),
        u0: grid.sample_cells(&problem.exact_u, 0.0),
        time: TimeGrid::new(t_final, level.steps)?,
        lipschitz_l: None,
    })
}

type LevelResult = (StaggeredGrid, f64, CellField, FaceField, f64);

fn level_errors(
    problem: &ManufacturedProblem,
    level: Level,
    cfg: &SolverConfig,
) -> Result<LevelResult> {
    match problem.kind {
        ProblemKind::Transient { t_final } => {
            let spec = transient_spec(problem, level)?;
            let run = run_keeping(&spec, cfg, |_| false)?;
            let st = run.final_state();
            let mb = run.monitors.mass_balance.relative();
            Ok((spec.grid, t_final, st.u.clone(), st.m.clone(), mb))
        }
        ProblemKind::Stationary => {
            let grid = problem.grid(level.cells)?;
            let exact = problem.exact_u.clone();
            let spec = StationarySpec {
                grid,
                poly: problem.poly.clone(),
                gas: problem.gas,
                f: problem.source_provider(),
                u_b: Provider::new(move |x, t| -exact.eval(x, t)),
                epsilon_schedule: crate::stationary::default_schedule(),
                mode: StationaryMode::Primal,
            };
            let (st, _) = solve_stationary(&spec, cfg)?;
            Ok((grid, 0.0, st.u, st.m, 0.0))
        }
    }
}

/// Runs every level (concurrently) and tabulates errors at the final time.
pub fn run_convergence(
    problem: &ManufacturedProblem,
    levels: &[Level],
    cfg: &SolverConfig,
) -> Result<ConvergenceTable> {
    if levels.len() < 3 {
        return Err(Error::config("a convergence study needs at least 3 levels"));
    }
    let ex = derive_exponents(&problem.poly, &problem.gas);
    let results: Vec<Result<(f64, f64, f64, f64, f64)>> = levels
        .par_iter()
        .map(|&level| {
            let (grid, t, u, m, mb) = level_errors(problem, level, cfg)?;
            let exact_u = grid.sample_cells(&problem.exact_u, t);
            let eu = cell_norm_p(&u.zip_map(&exact_u, |a, b| a - b)?, ex.r)?;
            let mut dm = m.clone();
            for f in grid.faces() {
                dm.set(&f, m.get(&f) - problem.exact_flux(f.midpoint, t)?[f.axis]);
            }
            let em = face_norm_p(&dm, ex.s)?;
            let h_time = match problem.kind {
                ProblemKind::Transient { t_final } => t_final / level.steps as f64,
                ProblemKind::Stationary => 0.0,
            };
            Ok((grid.spacing()[0], h_time, eu, em, mb))
        })
        .collect();
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len());
    for (level, res) in levels.iter().zip(results) {
        let (h_space, h_time, eu, em, mass_balance) = res?;
        let (ou, om) = match rows.last() {
            Some(prev) => {
                let ratio = (prev.h_space / h_space).max(if h_time > 0.0 {
                    prev.h_time / h_time
                } else {
                    1.0
                });
                (
                    order(prev.error_u_lr, eu, ratio),
                    order(prev.error_m_ls, em, ratio),
                )
            }
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            cells: level.cells,
            steps: level.steps,
            h_space,
            h_time,
            error_u_lr: eu,
            error_m_ls: em,
            observed_order: ou,
            observed_order_m: om,
            mass_balance,
        });
    }
    Ok(ConvergenceTable {
        problem: problem.name.clone(),
        rows,
    })
}

/// Solves the step `j` system of a 1D spec with at most 4 cells by nonlinear
/// Gauss-Seidel, each cell equation solved by bisection. Shares nothing with
/// the production residual or the Newton-based flux inversion.
pub fn brute_force_small_instance(
    spec: &TransientSpec,
    u_prev: &CellField,
    j: usize,
) -> Result<CellField> {
    let grid = spec.grid;
    let n = grid.num_cells();
    if grid.dim() != 1 || n > 4 {
        return Err(Error::config("oracle needs a 1D grid with at most 4 cells"));
    }
    let h = spec.time.h();
    let t = spec.time.t(j);
    let dx = grid.spacing()[0];
    let lambda = spec.gas.lambda();
    // coefficient lists at the n + 1 face midpoints
    let faces: Vec<(Vec<f64>, Vec<f64>)> = (0..=n)
        .map(|i| {
            let p = spec.poly.at([i as f64 * dx, 0.5], t)?;
            Ok((p.exponents().to_vec(), p.coefficients().to_vec()))
        })
        .collect::<Result<_>>()?;
    let big_f = |k: usize, s: f64| -> f64 {
        let (e, a) = &faces[k];
        e.iter()
            .zip(a)
            .map(|(e, a)| if *e == 0.0 { *a } else { a * s.powf(*e) })
            .sum()
    };
    // s F(s) = xi by plain bisection
    let inv = |k: usize, xi: f64| -> Result<f64> {
        if xi == 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        let mut guard = 0;
        while hi * big_f(k, hi) < xi {
            hi *= 2.0;
            guard += 1;
            if guard > 2000 {
                return Err(Error::RootNotConverged {
                    lo: 0.0,
                    hi,
                    iterations: guard,
                });
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * big_f(k, mid) < xi {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    let flux = |k: usize, grad: f64| -> Result<f64> {
        let s = inv(k, grad.abs())?;
        Ok(-grad.signum() * s)
    };
    let f: Vec<f64> = (0..n)
        .map(|c| spec.f.eval(grid.cell_center(c), t))
        .collect();
    let phi = &spec.phi.values;
    let acc =
        |c: usize, u: f64| phi[c] * (pow_odd(u, lambda) - pow_odd(u_prev.values[c], lambda)) / h;
    let cell_residual = |u: &[f64], c: usize| -> Result<f64> {
        let left = if c == 0 { 0.0 } else { u[c - 1] };
        let right = if c + 1 == n { 0.0 } else { u[c + 1] };
        let gl = if c == 0 {
            2.0 * u[c] / dx
        } else {
            (u[c] - left) / dx
        };
        let gr = if c + 1 == n {
            -2.0 * u[c] / dx
        } else {
            (right - u[c]) / dx
        };
        Ok(acc(c, u[c]) + (flux(c + 1, gr)? - flux(c, gl)?) / dx - f[c])
    };
    let mut u = u_prev.values.clone();
    for _sweep in 0..20000 {
        let mut change = 0.0_f64;
        for c in 0..n {
            let r_at = |v: f64, u: &mut Vec<f64>| -> Result<f64> {
                u[c] = v;
                cell_residual(u, c)
            };
            let mut w = u.clone();
            if r_at(u[c], &mut w)? == 0.0 {
                continue;
            }
            let mut lo = u[c] - 1.0;
            let mut hi = u[c] + 1.0;
            let mut expand = 0;
            while r_at(lo, &mut w)? > 0.0 {
                lo -= 2.0 * (hi - lo);
                expand += 1;
                if expand > 200 {
                    return Err(Error::RootNotConverged {
                        lo,
                        hi,
                        iterations: expand,
                    });
                }
            }
            while r_at(hi, &mut w)? < 0.0 {
                hi += 2.0 * (hi - lo);
                expand += 1;
                if expand > 200 {
                    return Err(Error::RootNotConverged {
                        lo,
                        hi,
                        iterations: expand,
                    });
                }
            }
            for _ in 0..300 {
                let mid = 0.5 * (lo + hi);
                if r_at(mid, &mut w)? < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-16 * hi.abs().max(lo.abs()) || hi - lo < 1e-300 {
                    break;
                }
            }
            let new = 0.5 * (lo + hi);
            change = change.max((new - u[c]).abs());
            u[c] = new;
        }
        if change <= 1e-14 * (1.0 + u.iter().fold(0.0_f64, |m, v| m.max(v.abs()))) {
            return CellField::new(grid, u);
        }
    }
    Err(Error::NonConvergence {
        context: "brute-force oracle".into(),
        iterations: 20000,
        residual: f64::NAN,
    })
}

/// `e^{-t} sin(pi x)` for Darcy flow with `lambda = 1`: the heat equation.
pub fn linear_heat_problem() -> ManufacturedProblem {
    ManufacturedProblem {
        name: "linear-heat".into(),
        exact_u: Provider::new(|x, t| (-t).exp() * (std::f64::consts::PI * x[0]).sin()),
        poly: ForchheimerPolynomial::darcy(1.0).expect("valid"),
        gas: GasModel::from_lambda(1.0).expect("valid"),
        phi: 1.0.into(),
        dim: 1,
        extents: [1.0, 1.0],
        kind: ProblemKind::Transient { t_final: 0.1 },
        stencil_step: 1e-3,
    }
}

/// `(1 + t) x (1 - x) scale` with `F(s) = 1 + s` and `lambda = 1/2`.
pub fn nonlinear_problem(scale: f64) -> ManufacturedProblem {
    ManufacturedProblem {
        name: "nonlinear-two-term".into(),
        exact_u: Provider::new(move |x, t| (1.0 + t) * x[0] * (1.0 - x[0]) * scale),
        poly: ForchheimerPolynomial::constant(&[0.0, 1.0], &[1.0, 1.0]).expect("valid"),
        gas: GasModel::from_lambda(0.5).expect("valid"),
        phi: 1.0.into(),
        dim: 1,
        extents: [1.0, 1.0],
        kind: ProblemKind::Transient { t_final: 0.2 },
        stencil_step: 1e-3,
    }
}

/// Linear profile with Darcy flow, reproduced exactly by two-point fluxes.
pub fn linear_stationary_problem() -> ManufacturedProblem {
    ManufacturedProblem {
        name: "linear-stationary".into(),
        exact_u: Provider::new(|x, _| 0.5 + 2.0 * x[0]),
        poly: ForchheimerPolynomial::darcy(1.0).expect("valid"),
        gas: GasModel::from_lambda(0.5).expect("valid"),
        phi: 1.0.into(),
        dim: 1,
        extents: [1.0, 1.0],
        kind: ProblemKind::Stationary,
        stencil_step: 1e-3,
    }
}

/// Registered manufactured problems.
pub fn registry() -> Vec<ManufacturedProblem> {
    vec![
        linear_heat_problem(),
        nonlinear_problem(1.0),
        linear_stationary_problem(),
    ]
}

/// Stationary problems used for continuation, uniqueness and mode checks.
pub fn stationary_regression_problems() -> Vec<(String, StationarySpec)> {
    let base = |grid, poly, lambda, f, u_b| StationarySpec {
        grid,
        poly,
        gas: GasModel::from_lambda(lambda).expect("valid"),
        f,
        u_b,
        epsilon_schedule: crate::stationary::default_schedule(),
        mode: StationaryMode::Primal,
    };
    vec![
        (
            "darcy-linear-1d".into(),
            base(
                StaggeredGrid::new_1d(1.0, 16).expect("valid"),
                ForchheimerPolynomial::darcy(1.0).expect("valid"),
                0.5,
                0.0.into(),
                Provider::new(|x, _| -x[0]),
            ),
        ),
        (
            "two-term-source-1d".into(),
            base(
                StaggeredGrid::new_1d(1.0, 32).expect("valid"),
                ForchheimerPolynomial::constant(&[0.0, 1.0], &[1.0, 1.0]).expect("valid"),
                0.5,
                Provider::new(|x, _| 1.0 + (3.0 * x[0]).sin()),
                Provider::new(|x, _| -0.5 * x[0]),
            ),
        ),
        (
            "three-term-source-2d".into(),
            base(
                StaggeredGrid::new_2d([1.0, 1.0], [8, 8]).expect("valid"),
                ForchheimerPolynomial::constant(&[0.0, 0.5, 1.0], &[1.0, 1.0, 1.0]).expect("valid"),
                0.25,
                Provider::new(|x, _| 2.0 + x[0] * x[1]),
                0.0.into(),
            ),
        ),
    ]
}

/// A 3-cell step instance for the oracle.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub name: String,
    pub spec: TransientSpec,
    pub u_prev: CellField,
}

/// 3 cells on `[0, 1]`, `phi = 1`, `h = 0.1`, one step from `u_prev = (1, 4, 1)`.
pub fn oracle_instance(
    name: &str,
    poly: ForchheimerPolynomial,
    lambda: f64,
    f: f64,
) -> OracleInstance {
    let grid = StaggeredGrid::new_1d(1.0, 3).expect("valid grid");
    let u_prev = grid.cell_field(vec![1.0, 4.0, 1.0]).expect("finite");
    OracleInstance {
        name: name.into(),
        spec: TransientSpec {
            grid,
            poly,
            gas: GasModel::from_lambda(lambda).expect("valid"),
            phi: grid.cell_field(vec![1.0; 3]).expect("finite"),
            f: f.into(),
            u0: u_prev.clone(),
            time: TimeGrid::new(0.1, 1).expect("valid"),
            lipschitz_l: None,
        },
        u_prev,
    }
}

/// Darcy and two-term polynomials at `lambda` 1 and 1/2.
pub fn oracle_instances() -> Vec<OracleInstance> {
    let darcy = || ForchheimerPolynomial::darcy(1.0).expect("valid");
    let two = || ForchheimerPolynomial::constant(&[0.0, 1.0], &[1.0, 1.0]).expect("valid");
    vec![
        oracle_instance("darcy-linear", darcy(), 1.0, 0.0),
        oracle_instance("darcy-gas", darcy(), 0.5, 0.0),
        oracle_instance("two-term-linear", two(), 1.0, 0.0),
        oracle_instance("two-term-gas", two(), 0.5, 0.0),
    ]
}
