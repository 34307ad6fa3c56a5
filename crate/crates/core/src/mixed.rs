//! The mixed system with flux and scalar kept as separate unknowns:
//!
//! ```text
//! (F(|m|) m, v) + eps_div (|div m|^{r*-2} div m, div v) - (u, div v) = -<g, v . nu>
//! (A pi(u), q) + (div m, q) = (b, q)
//! ```
//!
//! for every face test function `v` and cell test function `q`, where
//! `A = mass_coeff phi + eps_zero_order`. Boundary faces carry half a dual
//! cell, which makes the system with `eps_div = 0` equivalent to the
//! two-point primal system of [`crate::solver`].
//!
//! When `A > 0` and `lambda < 1` the scalar unknown is `w = pi(u)`, in which
//! the second equation is linear and `u = sign(w) |w|^{1/lambda}` is
//! continuously differentiable; otherwise it is `u` itself.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{BoundaryData, CellField, Face, FaceField, StaggeredGrid};
use crate::model::{derive_exponents, pow_odd, ForchheimerPolynomial, GasModel, LocalPolynomial};
use crate::solver::{
    smoothed_pi_derivative, IterationRecord, Phase, SolveDiagnostics, SolverConfig,
};

#[derive(Debug, Clone, Copy)]
pub struct MixedProblem<'a> {
    pub poly: &'a ForchheimerPolynomial,
    pub gas: &'a GasModel,
    pub phi: &'a CellField,
    pub rhs: &'a CellField,
    pub mass_coeff: f64,
    pub eps_zero_order: f64,
    /// Weight of the `|div m|^{r*-2} div m` regularization.
    pub eps_div: f64,
    pub bdata: &'a BoundaryData,
    pub t: f64,
}

/// Pointwise defects of both equations in volume-weighted 2-norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedDefect {
    /// `F(|m|) m + grad u` (plus the regularization) on faces.
    pub momentum: f64,
    /// `A pi(u) + div m - b` on cells.
    pub continuity: f64,
    /// `1 + |b|`, the scale the solver tolerance is relative to.
    pub scale: f64,
}

impl MixedDefect {
    pub fn max(&self) -> f64 {
        self.momentum.max(self.continuity)
    }

    pub fn relative(&self) -> f64 {
        self.max() / self.scale
    }
}

struct Assembled {
    grid: StaggeredGrid,
    faces: Vec<Face>,
    polys: Vec<LocalPolynomial>,
    /// Right-hand side of the momentum equation per face.
    boundary_rhs: Vec<f64>,
    accumulation: Vec<f64>,
    rhs: Vec<f64>,
    eps_div: f64,
    r_star: f64,
    lambda: f64,
    /// Scalar unknown is `pi(u)` rather than `u`.
    use_w: bool,
}

impl Assembled {
    fn nf(&self) -> usize {
        self.faces.len()
    }

    /// Entry of `div e_f` on the cells adjacent to face `f`.
    fn div_entries(&self, f: &Face) -> [(Option<usize>, f64); 2] {
        let h = self.grid.spacing()[f.axis];
        [(f.minus, 1.0 / h), (f.plus, -1.0 / h)]
    }

    fn divergence(&self, m: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.grid.num_cells()];
        for (f, &mf) in self.faces.iter().zip(m) {
            for (c, s) in self.div_entries(f) {
                if let Some(c) = c {
                    d[c] += s * mf;
                }
            }
        }
        d
    }

    /// Raw residuals (test-function form): faces first, then cells.
    fn residual(&self, m: &[f64], w: &[f64]) -> Vec<f64> {
        let vol = self.grid.cell_volume();
        let div = self.divergence(m);
        let u: Vec<f64> = w.iter().map(|&w| self.to_u(w)).collect();
        let reg: Vec<f64> = div
            .iter()
            .map(|&d| self.eps_div * pow_odd(d, self.r_star - 1.0))
            .collect();
        let mut out = Vec::with_capacity(self.nf() + u.len());
        for (k, f) in self.faces.iter().enumerate() {
            let p = &self.polys[k];
            let mut v = f.weight * p.f(m[k].abs()) * m[k] - self.boundary_rhs[k];
            for (c, s) in self.div_entries(f) {
                if let Some(c) = c {
                    v += vol * s * (reg[c] - u[c]);
                }
            }
            out.push(v);
        }
        for c in 0..u.len() {
            out.push(vol * (self.accumulation[c] * self.to_pi(w[c]) + div[c] - self.rhs[c]));
        }
        out
    }

    fn jacobian(&self, m: &[f64], w: &[f64]) -> DMatrix<f64> {
        let nf = self.nf();
        let nc = self.grid.num_cells();
        let vol = self.grid.cell_volume();
        let div = self.divergence(m);
        let mut j = DMatrix::zeros(nf + nc, nf + nc);
        let reg_slope: Vec<f64> = div
            .iter()
            .map(|&d| {
                if self.eps_div == 0.0 {
                    0.0
                } else {
                    self.eps_div * (self.r_star - 1.0) * d.abs().powf(self.r_star - 2.0)
                }
            })
            .collect();
        let du_dw: Vec<f64> = w
            .iter()
            .map(|&w| {
                if !self.use_w || self.lambda == 1.0 {
                    1.0
                } else {
                    w.abs().powf(1.0 / self.lambda - 1.0) / self.lambda
                }
            })
            .collect();
        for (k, f) in self.faces.iter().enumerate() {
            j[(k, k)] += f.weight * self.polys[k].dcalf(m[k].abs());
            for (c, s) in self.div_entries(f) {
                let Some(c) = c else { continue };
                j[(k, nf + c)] -= vol * s * du_dw[c];
                j[(nf + c, k)] += vol * s;
                if reg_slope[c] != 0.0 {
                    // eps D^T diag(vol slope) D couples faces sharing a cell
                    for (l, g) in self.faces.iter().enumerate() {
                        for (c2, s2) in self.div_entries(g) {
                            if c2 == Some(c) {
                                j[(k, l)] += vol * reg_slope[c] * s * s2;
                            }
                        }
                    }
                }
            }
        }
        for c in 0..nc {
            let slope = if self.use_w {
                1.0
            } else {
                smoothed_pi_derivative(w[c], self.lambda, 1e-8 * (1.0 + w[c].abs()))
            };
            j[(nf + c, nf + c)] += vol * self.accumulation[c] * slope;
        }
        j
    }

    fn to_u(&self, w: f64) -> f64 {
        if self.use_w {
            pow_odd(w, 1.0 / self.lambda)
        } else {
            w
        }
    }

    fn to_pi(&self, w: f64) -> f64 {
        if self.use_w {
            w
        } else {
            pow_odd(w, self.lambda)
        }
    }

    fn unknown_of(&self, u: f64) -> f64 {
        if self.use_w {
            pow_odd(u, self.lambda)
        } else {
            u
        }
    }

    fn defect(&self, raw: &[f64]) -> MixedDefect {
        let vol = self.grid.cell_volume();
        let nf = self.nf();
        let momentum = self
            .faces
            .iter()
            .zip(&raw[..nf])
            .map(|(f, r)| r * r / f.weight)
            .sum::<f64>()
            .sqrt();
        let continuity = (raw[nf..].iter().map(|r| r * r).sum::<f64>() / vol).sqrt();
        let scale = 1.0 + (self.rhs.iter().map(|b| b * b).sum::<f64>() * vol).sqrt();
        MixedDefect {
            momentum,
            continuity,
            scale,
        }
    }

    fn norm(&self, raw: &[f64]) -> f64 {
        let d = self.defect(raw);
        (d.momentum * d.momentum + d.continuity * d.continuity).sqrt()
    }
}

impl<'a> MixedProblem<'a> {
    fn assemble(&self) -> Result<Assembled> {
        let grid = *self.phi.grid();
        if self.rhs.grid() != &grid {
            return Err(Error::Shape("rhs and phi live on different grids".into()));
        }
        if !(self.eps_div >= 0.0 && self.mass_coeff >= 0.0 && self.eps_zero_order >= 0.0) {
            return Err(Error::config("mixed weights must be >= 0"));
        }
        let faces = grid.faces();
        let polys = faces
            .iter()
            .map(|f| self.poly.at(f.midpoint, self.t))
            .collect::<Result<Vec<_>>>()?;
        let boundary_rhs = faces
            .iter()
            .map(|f| match f.boundary {
                Some(side) => {
                    -self.bdata.eval(side, f.midpoint, self.t) * side.normal_sign() * f.area
                }
                None => 0.0,
            })
            .collect();
        let accumulation: Vec<f64> = self
            .phi
            .values
            .iter()
            .map(|p| self.mass_coeff * p + self.eps_zero_order)
            .collect();
        let lambda = self.gas.lambda();
        Ok(Assembled {
            use_w: lambda < 1.0 && accumulation.iter().all(|&a| a > 0.0),
            accumulation,
            grid,
            faces,
            polys,
            boundary_rhs,
            rhs: self.rhs.values.clone(),
            eps_div: self.eps_div,
            r_star: derive_exponents(self.poly, self.gas).r_star,
            lambda,
        })
    }

    fn pack(sys: &Assembled, m: &FaceField, u: &CellField) -> Result<(Vec<f64>, Vec<f64>)> {
        if m.grid() != &sys.grid || u.grid() != &sys.grid {
            return Err(Error::Shape("mixed state lives on a different grid".into()));
        }
        let mv = sys.faces.iter().map(|f| m.get(f)).collect();
        let wv = u.values.iter().map(|&u| sys.unknown_of(u)).collect();
        Ok((mv, wv))
    }

    /// Defect of both equations at `(m, u)`.
    pub fn defect(&self, m: &FaceField, u: &CellField) -> Result<MixedDefect> {
        let sys = self.assemble()?;
        let (mv, wv) = Self::pack(&sys, m, u)?;
        Ok(sys.defect(&sys.residual(&mv, &wv)))
    }

    /// Newton with backtracking on the coupled unknowns, started from
    /// `m = 0` and `u_init`.
    pub fn solve(
        &self,
        u_init: &CellField,
        cfg: &SolverConfig,
    ) -> Result<(FaceField, CellField, SolveDiagnostics)> {
        self.solve_from(&u_init.grid().zero_faces(), u_init, cfg)
    }

    pub fn solve_from(
        &self,
        m_init: &FaceField,
        u_init: &CellField,
        cfg: &SolverConfig,
    ) -> Result<(FaceField, CellField, SolveDiagnostics)> {
        cfg.validate()?;
        let sys = self.assemble()?;
        let (mut m, mut w) = Self::pack(&sys, m_init, u_init)?;
        let nf = sys.nf();
        let mut r = sys.residual(&m, &w);
        let mut rn = sys.norm(&r);
        let mut diag = SolveDiagnostics {
            initial_residual: rn,
            target: cfg.tol_residual * sys.defect(&r).scale,
            ..Default::default()
        };
        diag.history.push(IterationRecord {
            iteration: 0,
            phase: Phase::Initial,
            residual: rn,
            damping: 0.0,
        });
        let budget = cfg.picard_max + cfg.newton_max;
        while rn > diag.target {
            if diag.newton_iterations >= budget {
                return Err(Error::NonConvergence {
                    context: "mixed solve".into(),
                    iterations: diag.newton_iterations,
                    residual: rn,
                });
            }
            diag.newton_iterations += 1;
            let jac = sys.jacobian(&m, &w);
            let b = DVector::from_iterator(r.len(), r.iter().map(|v| -v));
            let step = jac
                .lu()
                .solve(&b)
                .ok_or_else(|| Error::Numerical("singular mixed Jacobian".into()))?;
            let mut theta = 1.0;
            let mut accepted = false;
            for _ in 0..=cfg.max_backtracks {
                let tm: Vec<f64> = m
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v + theta * step[k])
                    .collect();
                let tw: Vec<f64> = w
                    .iter()
                    .enumerate()
                    .map(|(c, v)| v + theta * step[nf + c])
                    .collect();
                let tr = sys.residual(&tm, &tw);
                let trn = sys.norm(&tr);
                if trn.is_finite() && trn < (1.0 - 1e-4 * theta) * rn {
                    m = tm;
                    w = tw;
                    r = tr;
                    rn = trn;
                    accepted = true;
                    break;
                }
                theta *= cfg.backtrack_factor;
            }
            if !accepted {
                return Err(Error::NonConvergence {
                    context: "mixed solve (line search failed)".into(),
                    iterations: diag.newton_iterations,
                    residual: rn,
                });
            }
            diag.history.push(IterationRecord {
                iteration: diag.newton_iterations,
                phase: Phase::Newton,
                residual: rn,
                damping: theta,
            });
        }
        diag.final_residual = rn;
        let mut mf = sys.grid.zero_faces();
        for (f, v) in sys.faces.iter().zip(&m) {
            mf.set(f, *v);
        }
        let u = CellField::new(sys.grid, w.iter().map(|&w| sys.to_u(w)).collect())?;
        Ok((mf, u, diag))
    }
}
