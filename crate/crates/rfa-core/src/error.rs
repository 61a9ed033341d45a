//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by estimation, clustering, and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument or configuration value is invalid
    /// (wrong shape, out-of-range parameter, malformed input).
    #[error("invalid input: {0}")]
    Input(String),

    /// The input is structurally valid but degenerate for the requested
    /// operation (e.g. a panel whose rows are all identical).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A numerical routine failed or refused to continue (singular system,
    /// non-convergence). The message carries diagnostics such as condition
    /// numbers or iteration counts.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for an [`Error::Input`] with a formatted message.
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Shorthand for an [`Error::Numerical`] with a formatted message.
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
