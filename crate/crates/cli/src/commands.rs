//! Workflows behind each subcommand.

use std::fmt::Write as _;
use std::path::PathBuf;

use forchgas_core::grid::{check_adjointness, write_cells_csv, write_faces_csv};
use forchgas_core::inequalities::{run_randomized_suite, write_reports_csv};
use forchgas_core::stationary::{solve_stationary, stationary_residual};
use forchgas_core::transient::{mixed_residual_check, run};
use forchgas_core::verification::run_convergence;
use forchgas_core::{derive_exponents, FieldState};

use crate::config::{parse_config, RunConfig};
use crate::output::{sha256_hex, Artifacts, ManifestHeader};
use crate::CliError;

/// Adjointness defects above this (relative) fail `check-grid`.
pub const ADJOINTNESS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SolveStationary,
    SolveTransient,
    VerifyInequalities,
    Convergence,
    CheckGrid,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveStationary => "solve-stationary",
            Command::SolveTransient => "solve-transient",
            Command::VerifyInequalities => "verify-inequalities",
            Command::Convergence => "convergence",
            Command::CheckGrid => "check-grid",
        }
    }

    fn needs_config(self) -> bool {
        matches!(
            self,
            Command::SolveStationary | Command::SolveTransient | Command::Convergence
        )
    }
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: Option<PathBuf>,
    /// Overrides `output.directory`.
    pub output: Option<PathBuf>,
    /// Overrides `output.snapshot_every`.
    pub snapshots: Option<usize>,
    /// Seeds tried by `check-grid`.
    pub seeds: u64,
}

impl Invocation {
    pub fn new(command: Command) -> Self {
        Invocation {
            command,
            config: None,
            output: None,
            snapshots: None,
            seeds: 100,
        }
    }
}

/// Result of a completed run. `failure` is set when the workflow ran but one
/// of its checks did not hold; outputs are written either way.
#[derive(Debug)]
pub struct Outcome {
    pub directory: PathBuf,
    pub manifest: PathBuf,
    pub files: Vec<String>,
    pub failure: Option<(String, Vec<String>)>,
}

struct Run {
    artifacts: Artifacts,
    seed: Option<u64>,
    failure: Option<(String, Vec<String>)>,
}

impl Run {
    fn ok(artifacts: Artifacts) -> Self {
        Run {
            artifacts,
            seed: None,
            failure: None,
        }
    }
}

/// Loads the configuration, runs the workflow and writes its artifacts.
pub fn dispatch(inv: &Invocation) -> Result<Outcome, CliError> {
    let text = match &inv.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None if inv.command.needs_config() => {
            return Err(CliError::Usage(format!(
                "{} requires --config <file>",
                inv.command.name()
            )))
        }
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(k) = inv.snapshots {
        if k == 0 {
            return Err(CliError::Validation(
                vec!["--snapshots must be >= 1".into()],
            ));
        }
        cfg.output.snapshot_every = k;
    }
    let run = match inv.command {
        Command::SolveStationary => solve_stationary_cmd(&cfg)?,
        Command::SolveTransient => solve_transient_cmd(&cfg)?,
        Command::VerifyInequalities => verify_inequalities_cmd(&cfg)?,
        Command::Convergence => convergence_cmd(&cfg)?,
        Command::CheckGrid => check_grid_cmd(&cfg, inv.seeds)?,
    };
    let directory = inv
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let header = ManifestHeader {
        command: inv.command.name().into(),
        inputs_sha256: inputs_hash(&text, inv),
        seed: run.seed,
    };
    let manifest = run.artifacts.commit(&directory, &header)?;
    Ok(Outcome {
        files: run.artifacts.names().map(String::from).collect(),
        directory,
        manifest,
        failure: run.failure,
    })
}

fn inputs_hash(text: &str, inv: &Invocation) -> String {
    let mut s = String::from(text);
    let _ = write!(s, "\n#command={}", inv.command.name());
    if let Some(k) = inv.snapshots {
        let _ = write!(s, "\n#snapshots={k}");
    }
    if inv.command == Command::CheckGrid {
        let _ = write!(s, "\n#seeds={}", inv.seeds);
    }
    sha256_hex(s.as_bytes())
}

fn validation(p: Vec<String>) -> CliError {
    CliError::Validation(p)
}

fn f(v: f64) -> String {
    format!("{v:e}")
}

fn stage_state(a: &mut Artifacts, prefix: &str, state: &FieldState) -> Result<(), CliError> {
    a.add_with(format!("{prefix}u.csv"), |b| write_cells_csv(&state.u, b))?;
    a.add_with(format!("{prefix}m.csv"), |b| write_faces_csv(&state.m, b))
}

fn solve_stationary_cmd(cfg: &RunConfig) -> Result<Run, CliError> {
    let spec = cfg.stationary_spec().map_err(validation)?;
    let solver = cfg.solver_config().map_err(validation)?;
    let (state, report) = solve_stationary(&spec, &solver)?;
    let residual = stationary_residual(&spec, &state)?;
    let mut a = Artifacts::new();
    stage_state(&mut a, "", &state)?;
    a.add_with("continuation.csv", |b| report.write_csv(b))?;
    a.add_with("diagnostics.csv", |b| report.limit_diagnostics.write_csv(b))?;
    let ex = derive_exponents(&spec.poly, &spec.gas);
    let mut s = String::new();
    let _ = writeln!(s, "mode = {:?}", spec.mode);
    let _ = writeln!(s, "cells = {}", spec.grid.num_cells());
    let _ = writeln!(s, "lambda = {}", f(spec.gas.lambda()));
    let _ = writeln!(
        s,
        "exponents_s_sstar_r_rstar = {} {} {} {}",
        f(ex.s),
        f(ex.s_star),
        f(ex.r),
        f(ex.r_star)
    );
    let _ = writeln!(s, "h3_satisfied = {}", ex.r <= ex.s_star);
    let _ = writeln!(s, "epsilon_steps = {}", report.steps.len());
    let _ = writeln!(s, "limit_delta = {}", f(report.limit_delta));
    let _ = writeln!(s, "limit_residual = {}", f(report.limit_residual));
    let _ = writeln!(s, "stationary_residual = {}", f(residual));
    a.add("summary.txt", s.into_bytes());
    Ok(Run::ok(a))
}

fn solve_transient_cmd(cfg: &RunConfig) -> Result<Run, CliError> {
    let spec = cfg.transient_spec().map_err(validation)?;
    let solver = cfg.solver_config().map_err(validation)?;
    let every = cfg.output.snapshot_every;
    let run = run(&spec, &solver)?;
    let last = spec.time.steps();
    let mut a = Artifacts::new();
    for (j, state) in run
        .states
        .iter()
        .filter(|(j, _)| j % every == 0 || *j == last)
    {
        stage_state(&mut a, &format!("snapshots/step{j:06}_"), state)?;
    }
    a.add_with("monitors.csv", |b| run.monitors.write_csv(b))?;
    let mixed = mixed_residual_check(&run.states, &spec)?;
    let ex = derive_exponents(&spec.poly, &spec.gas);
    let mb = run.monitors.mass_balance;
    let [u_lr, pi_lrstar, m_l2, m_ls] = run.monitors.maxima();
    let iterations: usize = run
        .monitors
        .diagnostics
        .iter()
        .map(|d| d.iterations())
        .sum();
    let clamped: usize = run
        .monitors
        .diagnostics
        .iter()
        .map(|d| d.clamped_cells)
        .sum();
    let mut s = String::new();
    let _ = writeln!(s, "cells = {}", spec.grid.num_cells());
    let _ = writeln!(s, "steps = {}", spec.time.steps());
    let _ = writeln!(s, "h = {}", f(spec.time.h()));
    let _ = writeln!(
        s,
        "step_threshold = {}",
        f(0.5 * spec.phi.min() * spec.gas.lambda())
    );
    let _ = writeln!(s, "lambda = {}", f(spec.gas.lambda()));
    let _ = writeln!(s, "linear_test_mode = {}", spec.gas.is_linear_test_mode());
    let _ = writeln!(s, "physical_gas = {}", spec.gas.is_physical());
    let _ = writeln!(
        s,
        "absorb_gas_constant = {}",
        cfg.problem.absorb_gas_constant
    );
    let _ = writeln!(s, "h3_satisfied = {}", ex.r <= ex.s_star);
    let _ = writeln!(s, "max_u_lr = {}", f(u_lr));
    let _ = writeln!(s, "max_pi_u_lrstar = {}", f(pi_lrstar));
    let _ = writeln!(s, "max_m_l2 = {}", f(m_l2));
    let _ = writeln!(s, "max_m_ls = {}", f(m_ls));
    let _ = writeln!(s, "dq_total = {}", f(run.monitors.dq_total()));
    let _ = writeln!(s, "mass_storage = {}", f(mb.storage));
    let _ = writeln!(s, "mass_net_supply = {}", f(mb.net_supply));
    let _ = writeln!(s, "mass_balance_relative = {}", f(mb.relative()));
    let _ = writeln!(s, "mixed_residual_max = {}", f(mixed));
    let _ = writeln!(s, "solver_iterations = {iterations}");
    let _ = writeln!(s, "clamped_cells = {clamped}");
    if let Some(l) = spec.lipschitz_l {
        let _ = writeln!(s, "lipschitz_l = {}", f(l));
    }
    a.add("summary.txt", s.into_bytes());
    Ok(Run::ok(a))
}

fn verify_inequalities_cmd(cfg: &RunConfig) -> Result<Run, CliError> {
    let grid = cfg.grid().map_err(validation)?;
    let poly = cfg.polynomial(&grid).map_err(validation)?;
    let suite = cfg.suite_config().map_err(|e| validation(vec![e]))?;
    let reports = run_randomized_suite(&poly, &suite)?;
    let mut a = Artifacts::new();
    a.add_with("inequalities.csv", |b| write_reports_csv(&reports, b))?;
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| {
            format!(
                "{}: min_margin {:e} at {}",
                r.name, r.min_margin, r.worst_case
            )
        })
        .collect();
    let failure = (!failed.is_empty()).then(|| {
        (
            format!("{} inequality check(s) failed", failed.len()),
            failed,
        )
    });
    Ok(Run {
        artifacts: a,
        seed: Some(suite.seed),
        failure,
    })
}

fn convergence_cmd(cfg: &RunConfig) -> Result<Run, CliError> {
    let section = cfg
        .convergence
        .as_ref()
        .ok_or_else(|| validation(vec!["convergence requires a [convergence] section".into()]))?;
    let (problem, levels) = section.build().map_err(validation)?;
    let solver = cfg.solver_config().map_err(validation)?;
    let table = run_convergence(&problem, &levels, &solver)?;
    let mut a = Artifacts::new();
    a.add_with("convergence.csv", |b| table.write_csv(b))?;
    Ok(Run::ok(a))
}

#[derive(serde::Serialize)]
struct GridCheckRow {
    seed: u64,
    defect: f64,
    scale: f64,
    relative: f64,
    passed: bool,
}

fn check_grid_cmd(cfg: &RunConfig, seeds: u64) -> Result<Run, CliError> {
    let grid = cfg.grid().map_err(validation)?;
    let rows: Vec<GridCheckRow> = (0..seeds)
        .map(|seed| {
            let c = check_adjointness(&grid, seed);
            GridCheckRow {
                seed,
                defect: c.defect,
                scale: c.scale,
                relative: c.relative(),
                passed: c.relative() <= ADJOINTNESS_TOLERANCE,
            }
        })
        .collect();
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in &rows {
            w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush()?;
    }
    let mut a = Artifacts::new();
    a.add("adjointness.csv", buf);
    let mut centers = String::from("cell,x,y\n");
    for (c, x) in grid.cell_centers().enumerate() {
        let _ = writeln!(centers, "{c},{},{}", f(x[0]), f(x[1]));
    }
    a.add("cells.csv", centers.into_bytes());
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("seed {}: relative defect {:e}", r.seed, r.relative))
        .collect();
    let failure =
        (!failed.is_empty()).then(|| ("discrete adjointness check failed".to_string(), failed));
    Ok(Run {
        artifacts: a,
        seed: None,
        failure,
    })
}
