//! Run configuration: TOML schema, profile library and validation.

use std::f64::consts::PI;
use std::path::Path;

use forchgas_core::inequalities::SuiteConfig;
use forchgas_core::stationary::{default_schedule, StationaryMode, StationarySpec};
use forchgas_core::transient::{TimeGrid, TransientSpec};
use forchgas_core::verification::{self, Level, ManufacturedProblem};
use forchgas_core::{
    CellField, Error, ForchheimerPolynomial, GasModel, LinearSolver, Point, Provider, SolverConfig,
    StaggeredGrid,
};
use serde::Deserialize;

use crate::CliError;

/// Top-level configuration document.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub discretization: DiscretizationSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub inequalities: InequalitySection,
    #[serde(default)]
    pub convergence: Option<ConvergenceSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    /// Exponents `alpha_0 = 0 < alpha_1 < ... < alpha_N`.
    pub exponents: Vec<f64>,
    /// One profile per exponent.
    pub coefficients: Vec<ProfileSpec>,
    /// Physical gas constants; mutually exclusive with `lambda`.
    pub gas: Option<GasSection>,
    /// Accumulation exponent given directly (gas constants pre-absorbed).
    pub lambda: Option<f64>,
    /// Multiply the porosity by `((gamma + 1) / (c gamma))^lambda`.
    pub absorb_gas_constant: bool,
    pub phi: ProfileSpec,
    pub f: ProfileSpec,
    /// Stationary boundary datum; the imposed trace is `-u_b`.
    pub u_b: ProfileSpec,
    pub initial: ProfileSpec,
    pub lipschitz_l: Option<f64>,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            exponents: vec![0.0],
            coefficients: vec![ProfileSpec::Value(1.0)],
            gas: None,
            lambda: None,
            absorb_gas_constant: true,
            phi: ProfileSpec::Value(1.0),
            f: ProfileSpec::Value(0.0),
            u_b: ProfileSpec::Value(0.0),
            initial: ProfileSpec::Value(0.0),
            lipschitz_l: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSection {
    pub c: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationSection {
    pub dim: usize,
    pub cells: Vec<usize>,
    pub extents: Vec<f64>,
    pub t_final: Option<f64>,
    pub steps: Option<usize>,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        DiscretizationSection {
            dim: 1,
            cells: vec![16],
            extents: vec![1.0],
            t_final: None,
            steps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearSolverKind {
    #[default]
    Direct,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    #[default]
    Primal,
    MixedRegularized,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub picard_max: usize,
    pub newton_max: usize,
    pub tol_residual: f64,
    pub delta_smoothing: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub linear_solver: LinearSolverKind,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub epsilon_schedule: Option<Vec<f64>>,
    pub mode: ModeKind,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            picard_max: d.picard_max,
            newton_max: d.newton_max,
            tol_residual: d.tol_residual,
            delta_smoothing: d.delta_smoothing,
            backtrack_factor: d.backtrack_factor,
            max_backtracks: d.max_backtracks,
            linear_solver: LinearSolverKind::Direct,
            cg_tol: 1e-13,
            cg_max_iter: 10_000,
            epsilon_schedule: None,
            mode: ModeKind::Primal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: String,
    /// Keep every k-th transient state (the initial and final states are always kept).
    pub snapshot_every: usize,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: "forchgas-out".into(),
            snapshot_every: 1,
            formats: vec![Format::Csv],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InequalitySection {
    pub samples: usize,
    pub seed: u64,
    pub magnitude_min: f64,
    pub magnitude_max: f64,
}

impl Default for InequalitySection {
    fn default() -> Self {
        let d = SuiteConfig::default();
        InequalitySection {
            samples: d.samples,
            seed: d.seed,
            magnitude_min: d.magnitude_range.0,
            magnitude_max: d.magnitude_range.1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    /// Name of a registered manufactured problem.
    pub problem: String,
    #[serde(default = "unit")]
    pub scale: f64,
    pub levels: Vec<LevelSpec>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    pub cells: usize,
    #[serde(default)]
    pub steps: usize,
}

/// A scalar field: a bare number or a named profile.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Value(f64),
    Profile(Profile),
}

/// Built-in profiles. Coordinates beyond the grid dimension are ignored.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    /// `value`
    Constant { value: f64 },
    /// `value + slope . x`
    Linear { value: f64, slope: Vec<f64> },
    /// `base + amplitude exp(-|x - center|^2 / (2 width^2))`
    GaussianBump {
        #[serde(default)]
        base: f64,
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// `base + amplitude prod_i sin(k_i pi x_i / L_i)`
    SinProduct {
        #[serde(default)]
        base: f64,
        amplitude: f64,
        #[serde(default)]
        frequency: Vec<f64>,
    },
    /// One value per cell in row-major order, piecewise constant.
    Tabulated { values: Vec<f64> },
}

impl ProfileSpec {
    /// Builds a provider on `grid`. `what` names the field in error messages.
    pub fn provider(
        &self,
        grid: &StaggeredGrid,
        what: &str,
    ) -> std::result::Result<Provider, String> {
        let dim = grid.dim();
        let check_len = |name: &str, v: &[f64]| {
            if v.len() == dim {
                Ok(())
            } else {
                Err(format!(
                    "{what}: {name} has {} entries, grid dimension is {dim}",
                    v.len()
                ))
            }
        };
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{what}: {name} = {v} is not finite"))
            }
        };
        match self {
            ProfileSpec::Value(v) | ProfileSpec::Profile(Profile::Constant { value: v }) => {
                finite(*v, "value")?;
                Ok(Provider::constant(*v))
            }
            ProfileSpec::Profile(Profile::Linear { value, slope }) => {
                check_len("slope", slope)?;
                let (v, s) = (*value, pad(slope));
                Ok(Provider::new(move |x, _| v + s[0] * x[0] + s[1] * x[1]))
            }
            ProfileSpec::Profile(Profile::GaussianBump {
                base,
                amplitude,
                center,
                width,
            }) => {
                check_len("center", center)?;
                if !(*width > 0.0) {
                    return Err(format!("{what}: width = {width} must be > 0"));
                }
                let (b, a, c, w) = (*base, *amplitude, pad(center), *width);
                Ok(Provider::new(move |x, _| {
                    let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                    b + a * (-r2 / (2.0 * w * w)).exp()
                }))
            }
            ProfileSpec::Profile(Profile::SinProduct {
                base,
                amplitude,
                frequency,
            }) => {
                let k = if frequency.is_empty() {
                    vec![1.0; dim]
                } else {
                    frequency.clone()
                };
                check_len("frequency", &k)?;
                let (b, a, ext) = (*base, *amplitude, grid.extents());
                Ok(Provider::new(move |x, _| {
                    let prod: f64 = k
                        .iter()
                        .enumerate()
                        .map(|(i, k)| (k * PI * x[i] / ext[i]).sin())
                        .product();
                    b + a * prod
                }))
            }
            ProfileSpec::Profile(Profile::Tabulated { values }) => {
                if values.len() != grid.num_cells() {
                    return Err(format!(
                        "{what}: tabulated profile has {} values, grid has {} cells",
                        values.len(),
                        grid.num_cells()
                    ));
                }
                if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                    return Err(format!("{what}: tabulated value {v} is not finite"));
                }
                let g = *grid;
                let values = values.clone();
                Ok(Provider::new(move |x, _| values[locate(&g, x)]))
            }
        }
    }
}

fn pad(v: &[f64]) -> [f64; 2] {
    [
        v.first().copied().unwrap_or(0.0),
        v.get(1).copied().unwrap_or(0.0),
    ]
}

/// Cell containing `x`, clamped to the grid.
fn locate(grid: &StaggeredGrid, x: Point) -> usize {
    let [nx, ny] = grid.cells();
    let [hx, hy] = grid.spacing();
    let ix = ((x[0] / hx).floor().max(0.0) as usize).min(nx - 1);
    let iy = if grid.dim() == 1 {
        0
    } else {
        ((x[1] / hy).floor().max(0.0) as usize).min(ny - 1)
    };
    grid.cell_index(ix, iy)
}

/// Parses `path` and checks every section that does not depend on the
/// command. Command-specific checks happen when the specs are built.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    let mut problems = Vec::new();
    let grid = cfg.grid().map_err(|p| problems.extend(p)).ok();
    if cfg.problem.gas.is_some() || cfg.problem.lambda.is_some() {
        if let Err(p) = cfg.gas() {
            problems.extend(p);
        }
    }
    if let Some(grid) = &grid {
        if let Err(p) = cfg.polynomial(grid) {
            problems.extend(p);
        }
        for (name, spec) in cfg.fields() {
            if let Err(e) = spec.provider(grid, name) {
                problems.push(e);
            }
        }
    }
    if let Err(p) = cfg.solver_config() {
        problems.extend(p);
    }
    if let Some(sched) = &cfg.solver.epsilon_schedule {
        if sched.is_empty()
            || sched.iter().any(|e| !(*e > 0.0))
            || sched.windows(2).any(|w| !(w[1] < w[0]))
        {
            problems.push(
                "solver.epsilon_schedule must be non-empty, positive and strictly decreasing"
                    .into(),
            );
        }
    }
    if cfg.output.snapshot_every == 0 {
        problems.push("output.snapshot_every must be >= 1".into());
    }
    if cfg.output.directory.is_empty() {
        problems.push("output.directory must not be empty".into());
    }
    if cfg.problem.lipschitz_l.is_some_and(|l| !(l >= 0.0)) {
        problems.push("problem.lipschitz_l must be >= 0".into());
    }
    let d = &cfg.discretization;
    if d.t_final.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
        problems.push("discretization.t_final must be positive and finite".into());
    }
    if d.steps == Some(0) {
        problems.push("discretization.steps must be >= 1".into());
    }
    if let (Some(grid), Some(t), Some(j)) = (&grid, d.t_final, d.steps) {
        let gas = cfg.gas().ok();
        let phi = gas.as_ref().and_then(|g| cfg.porosity(grid, g).ok());
        if let (Some(gas), Some(phi)) = (gas, phi) {
            let (h, threshold) = (t / j.max(1) as f64, 0.5 * phi.min() * gas.lambda());
            if !(h < threshold) {
                problems.push(format!(
                    "time step h = {h} violates h < phi_min * lambda / 2 = {threshold}"
                ));
            }
        }
    }
    if let Err(e) = cfg.suite_config() {
        problems.push(e);
    }
    if let Some(conv) = &cfg.convergence {
        if let Err(p) = conv.build() {
            problems.extend(p);
        }
    }
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Validation(problems))
    }
}

fn config_problems(e: Error) -> Vec<String> {
    match e {
        Error::Config(p) => p,
        other => vec![other.to_string()],
    }
}

impl RunConfig {
    fn fields(&self) -> [(&'static str, &ProfileSpec); 4] {
        let p = &self.problem;
        [
            ("problem.phi", &p.phi),
            ("problem.f", &p.f),
            ("problem.u_b", &p.u_b),
            ("problem.initial", &p.initial),
        ]
    }

    pub fn grid(&self) -> Result<StaggeredGrid, Vec<String>> {
        let d = &self.discretization;
        let mut problems = Vec::new();
        if !(d.dim == 1 || d.dim == 2) {
            problems.push(format!("discretization.dim = {} must be 1 or 2", d.dim));
        }
        if d.cells.len() != d.dim {
            problems.push(format!(
                "discretization.cells has {} entries, dim is {}",
                d.cells.len(),
                d.dim
            ));
        }
        if d.extents.len() != d.dim {
            problems.push(format!(
                "discretization.extents has {} entries, dim is {}",
                d.extents.len(),
                d.dim
            ));
        }
        if !problems.is_empty() {
            return Err(problems);
        }
        let grid = if d.dim == 1 {
            StaggeredGrid::new_1d(d.extents[0], d.cells[0])
        } else {
            StaggeredGrid::new_2d([d.extents[0], d.extents[1]], [d.cells[0], d.cells[1]])
        };
        grid.map_err(config_problems)
    }

    pub fn gas(&self) -> Result<GasModel, Vec<String>> {
        match (self.problem.gas, self.problem.lambda) {
            (Some(g), None) => GasModel::new(g.c, g.gamma).map_err(config_problems),
            (None, Some(l)) => GasModel::from_lambda(l).map_err(config_problems),
            (None, None) => Err(vec!["problem: one of `gas` or `lambda` is required".into()]),
            (Some(_), Some(_)) => Err(vec![
                "problem: `gas` and `lambda` are mutually exclusive".into()
            ]),
        }
    }

    pub fn polynomial(&self, grid: &StaggeredGrid) -> Result<ForchheimerPolynomial, Vec<String>> {
        let p = &self.problem;
        if p.exponents.len() != p.coefficients.len() {
            return Err(vec![format!(
                "problem: {} exponents but {} coefficients",
                p.exponents.len(),
                p.coefficients.len()
            )]);
        }
        let mut problems = Vec::new();
        let providers: Vec<Provider> = p
            .coefficients
            .iter()
            .enumerate()
            .filter_map(|(i, c)| {
                c.provider(grid, &format!("problem.coefficients[{i}]"))
                    .map_err(|e| problems.push(e))
                    .ok()
            })
            .collect();
        if !problems.is_empty() {
            return Err(problems);
        }
        let poly =
            ForchheimerPolynomial::new(p.exponents.clone(), providers).map_err(config_problems)?;
        let points = grid
            .faces()
            .iter()
            .map(|f| (f.midpoint, 0.0))
            .collect::<Vec<_>>();
        poly.validate_coefficients(points)
            .map_err(config_problems)?;
        Ok(poly)
    }

    pub fn solver_config(&self) -> Result<SolverConfig, Vec<String>> {
        let s = &self.solver;
        let cfg = SolverConfig {
            picard_max: s.picard_max,
            newton_max: s.newton_max,
            tol_residual: s.tol_residual,
            delta_smoothing: s.delta_smoothing,
            backtrack_factor: s.backtrack_factor,
            max_backtracks: s.max_backtracks,
            linear_solver: match s.linear_solver {
                LinearSolverKind::Direct => LinearSolver::Direct,
                LinearSolverKind::Cg => LinearSolver::Cg {
                    tol: s.cg_tol,
                    max_iter: s.cg_max_iter,
                },
            },
        };
        cfg.validate().map_err(config_problems)?;
        Ok(cfg)
    }

    pub fn suite_config(&self) -> Result<SuiteConfig, String> {
        let s = &self.inequalities;
        if s.samples == 0 {
            return Err("inequalities.samples must be >= 1".into());
        }
        if !(s.magnitude_min > 0.0
            && s.magnitude_max >= s.magnitude_min
            && s.magnitude_max.is_finite())
        {
            return Err(format!(
                "inequalities magnitude range ({}, {}) must satisfy 0 < min <= max < inf",
                s.magnitude_min, s.magnitude_max
            ));
        }
        Ok(SuiteConfig {
            samples: s.samples,
            seed: s.seed,
            magnitude_range: (s.magnitude_min, s.magnitude_max),
        })
    }

    /// Porosity after the optional gas-constant rescaling.
    fn porosity(&self, grid: &StaggeredGrid, gas: &GasModel) -> Result<CellField, Vec<String>> {
        let phi = self
            .problem
            .phi
            .provider(grid, "problem.phi")
            .map_err(|e| vec![e])?;
        let scale = if self.problem.absorb_gas_constant {
            gas.porosity_scale()
        } else {
            1.0
        };
        Ok(grid.sample_cells(&phi, 0.0).map(|v| v * scale))
    }

    pub fn stationary_spec(&self) -> Result<StationarySpec, Vec<String>> {
        let grid = self.grid()?;
        let mut problems = Vec::new();
        let gas = self.gas().map_err(|p| problems.extend(p)).ok();
        let poly = self.polynomial(&grid).map_err(|p| problems.extend(p)).ok();
        let f = self
            .problem
            .f
            .provider(&grid, "problem.f")
            .map_err(|e| problems.push(e))
            .ok();
        let u_b = self
            .problem
            .u_b
            .provider(&grid, "problem.u_b")
            .map_err(|e| problems.push(e))
            .ok();
        let (Some(gas), Some(poly), Some(f), Some(u_b)) = (gas, poly, f, u_b) else {
            return Err(problems);
        };
        let spec = StationarySpec {
            grid,
            poly,
            gas,
            f,
            u_b,
            epsilon_schedule: self
                .solver
                .epsilon_schedule
                .clone()
                .unwrap_or_else(default_schedule),
            mode: match self.solver.mode {
                ModeKind::Primal => StationaryMode::Primal,
                ModeKind::MixedRegularized => StationaryMode::MixedRegularized,
            },
        };
        spec.validate().map_err(config_problems)?;
        Ok(spec)
    }

    pub fn transient_spec(&self) -> Result<TransientSpec, Vec<String>> {
        let grid = self.grid()?;
        let mut problems = Vec::new();
        let d = &self.discretization;
        let time = match (d.t_final, d.steps) {
            (Some(t), Some(j)) => TimeGrid::new(t, j)
                .map_err(|e| problems.extend(config_problems(e)))
                .ok(),
            _ => {
                problems
                    .push("discretization.t_final and discretization.steps are required".into());
                None
            }
        };
        let gas = self.gas().map_err(|p| problems.extend(p)).ok();
        let poly = self.polynomial(&grid).map_err(|p| problems.extend(p)).ok();
        let f = self
            .problem
            .f
            .provider(&grid, "problem.f")
            .map_err(|e| problems.push(e))
            .ok();
        let u0 = self
            .problem
            .initial
            .provider(&grid, "problem.initial")
            .map_err(|e| problems.push(e))
            .ok();
        let phi = gas
            .as_ref()
            .and_then(|g| self.porosity(&grid, g).map_err(|p| problems.extend(p)).ok());
        let (Some(time), Some(gas), Some(poly), Some(f), Some(u0), Some(phi)) =
            (time, gas, poly, f, u0, phi)
        else {
            return Err(problems);
        };
        let spec = TransientSpec {
            grid,
            poly,
            gas,
            phi,
            f,
            u0: grid.sample_cells(&u0, 0.0),
            time,
            lipschitz_l: self.problem.lipschitz_l,
        };
        spec.validate().map_err(config_problems)?;
        Ok(spec)
    }
}

impl ConvergenceSection {
    pub fn build(&self) -> Result<(ManufacturedProblem, Vec<Level>), Vec<String>> {
        let mut problems = Vec::new();
        let problem = match self.problem.as_str() {
            "linear-heat" => Some(verification::linear_heat_problem()),
            "nonlinear-two-term" => Some(verification::nonlinear_problem(self.scale)),
            "linear-stationary" => Some(verification::linear_stationary_problem()),
            other => {
                problems.push(format!(
                    "convergence.problem `{other}` is not one of linear-heat, nonlinear-two-term, linear-stationary"
                ));
                None
            }
        };
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            problems.push(format!(
                "convergence.scale = {} must be positive",
                self.scale
            ));
        }
        if self.levels.len() < 3 {
            problems.push(format!(
                "convergence needs at least 3 levels, got {}",
                self.levels.len()
            ));
        }
        if self.levels.iter().any(|l| l.cells == 0) {
            problems.push("convergence level cells must be >= 1".into());
        }
        let transient = problem
            .as_ref()
            .is_some_and(|p| p.name != "linear-stationary");
        if transient && self.levels.iter().any(|l| l.steps == 0) {
            problems.push("transient convergence levels need steps >= 1".into());
        }
        match problem {
            Some(p) if problems.is_empty() => Ok((
                p,
                self.levels
                    .iter()
                    .map(|l| Level {
                        cells: l.cells,
                        steps: l.steps,
                    })
                    .collect(),
            )),
            _ => Err(problems),
        }
    }
}
