//! CLI error type and exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("scene: {0}")]
    Scene(String),
    #[error("output: {0}")]
    Output(#[from] std::io::Error),
    #[error(transparent)]
    Solver(#[from] fmpbem::Error),
}

impl CliError {
    /// `1` for usage, scene and configuration problems, `2` for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Scene(_) | CliError::Output(_) => 1,
            CliError::Solver(fmpbem::Error::InvalidConfig(_) | fmpbem::Error::Parse { .. } | fmpbem::Error::Io(_)) => 1,
            CliError::Solver(_) => 2,
        }
    }
}
