//! Command implementations behind the `herdopt` binary, exposed as a library
//! so integration tests can drive them directly.

pub mod commands;
pub mod config;
pub mod output;

/// CLI-level error with a stable exit-status contract:
/// 1 validation, 2 solver failure, 3 verification failure.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Solver(String),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "validation error: {msg}"),
            CliError::Solver(msg) => write!(f, "solver failure: {msg}"),
            CliError::Verification(msg) => write!(f, "verification failed: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<herdopt::Error> for CliError {
    fn from(err: herdopt::Error) -> Self {
        if err.is_validation() {
            CliError::Validation(err.to_string())
        } else {
            CliError::Solver(err.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Validation(err.to_string())
    }
}
