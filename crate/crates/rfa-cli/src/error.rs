//! CLI error type and process exit codes.

use rfa_core::Error as CoreError;

/// Exit code for usage and input problems (bad files, bad values).
pub const EXIT_INPUT: i32 = 2;
/// Exit code for numerical failures (singular systems, non-convergence).
pub const EXIT_NUMERICAL: i32 = 3;
/// Exit code for internal errors that indicate a bug.
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::Input(msg) | CoreError::Degenerate(msg) => CliError::Input(msg),
            CoreError::Numerical(msg) => CliError::Numerical(msg),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Internal(format!("JSON encoding failed: {err}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
