//! Configuration ingestion, experiment orchestration, report emission and
//! the verification suite behind the `advsis` command line.

pub mod config;
pub mod experiment;
pub mod report;
pub mod verify;

use advsis_core::CoreError;
use std::fmt;

/// Process-level error with the exit code it maps to:
/// 2 config/parse, 3 solver non-convergence, 4 invariant violation.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(CoreError),
    Invariant(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(e) => match e {
                CoreError::InvariantViolation(_) | CoreError::NonPositiveEigenvector { .. } => 4,
                CoreError::Parse { .. }
                | CoreError::InvalidParameter(_)
                | CoreError::NonFinite { .. }
                | CoreError::NonPositiveCoefficient { .. } => 2,
                _ => 3,
            },
            CliError::Invariant(_) => 4,
            CliError::Io(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Solver(e) => write!(f, "solver error: {e}"),
            CliError::Invariant(msg) => write!(f, "invariant violation: {msg}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Solver(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}
