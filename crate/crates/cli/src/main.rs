use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use forchgas_cli::{dispatch, Command, ErrorRecord, Invocation};

#[derive(Debug, Parser)]
#[command(name = "forchgas", version, about = "Forchheimer gas flow solver")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.directory).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Stationary problem by epsilon-continuation.
    SolveStationary(Common),
    /// Implicit-Euler march.
    SolveTransient {
        #[command(flatten)]
        common: Common,
        /// Keep every k-th state.
        #[arg(long)]
        snapshots: Option<usize>,
    },
    /// Randomized checks of the structural inequalities.
    VerifyInequalities(Common),
    /// Manufactured-solution convergence table.
    Convergence(Common),
    /// Discrete gradient/divergence adjointness on the configured grid.
    CheckGrid {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
    },
}

fn invocation(cmd: Cmd) -> Invocation {
    let (command, common, snapshots, seeds) = match cmd {
        Cmd::SolveStationary(c) => (Command::SolveStationary, c, None, None),
        Cmd::SolveTransient { common, snapshots } => {
            (Command::SolveTransient, common, snapshots, None)
        }
        Cmd::VerifyInequalities(c) => (Command::VerifyInequalities, c, None, None),
        Cmd::Convergence(c) => (Command::Convergence, c, None, None),
        Cmd::CheckGrid { common, seeds } => (Command::CheckGrid, common, None, Some(seeds)),
    };
    let mut inv = Invocation::new(command);
    inv.config = common.config;
    inv.output = common.output;
    inv.snapshots = snapshots;
    if let Some(s) = seeds {
        inv.seeds = s;
    }
    inv
}

fn main() -> ExitCode {
    let inv = invocation(Cli::parse().command);
    let name = inv.command.name();
    match dispatch(&inv) {
        Ok(outcome) => {
            println!("{}", outcome.manifest.display());
            match outcome.failure {
                None => ExitCode::SUCCESS,
                Some((message, details)) => {
                    let rec = ErrorRecord::check_failed(name, message, details);
                    eprintln!("{}", rec.to_json());
                    ExitCode::from(rec.exit_code as u8)
                }
            }
        }
        Err(e) => {
            let rec = ErrorRecord::from_error(name, &e);
            eprintln!("{}", rec.to_json());
            ExitCode::from(rec.exit_code as u8)
        }
    }
}
