//! Command-line front end: configuration loading, workflow dispatch and
//! artifact emission.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{dispatch, Command, Invocation};
pub use config::{load_config, parse_config, RunConfig};

use serde::Serialize;
use thiserror::Error;

/// Exit status for a run whose checks reported a failure.
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] forchgas_core::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Parse(_) => "parse",
            CliError::Validation(_) => "validation",
            CliError::Io(_) => "io",
            CliError::Core(
                forchgas_core::Error::Config(_) | forchgas_core::Error::StepRestriction { .. },
            ) => "validation",
            CliError::Core(_) => "solver",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" | "parse" | "validation" => 2,
            "io" => 5,
            _ => 4,
        }
    }

    pub fn details(&self) -> Vec<String> {
        match self {
            CliError::Validation(p) | CliError::Core(forchgas_core::Error::Config(p)) => p.clone(),
            other => vec![other.to_string()],
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Machine-readable error line written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorRecord<'a> {
    pub status: &'static str,
    pub command: &'a str,
    pub kind: &'a str,
    pub exit_code: i32,
    pub message: String,
    pub details: Vec<String>,
}

impl<'a> ErrorRecord<'a> {
    pub fn from_error(command: &'a str, e: &CliError) -> Self {
        ErrorRecord {
            status: "error",
            command,
            kind: e.kind(),
            exit_code: e.exit_code(),
            message: e.to_string(),
            details: e.details(),
        }
    }

    pub fn check_failed(command: &'a str, message: String, details: Vec<String>) -> Self {
        ErrorRecord {
            status: "error",
            command,
            kind: "check-failed",
            exit_code: EXIT_CHECK_FAILED,
            message,
            details,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain record")
    }
}
