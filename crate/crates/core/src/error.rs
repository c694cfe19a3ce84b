//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum SimError {
    /// An input fell outside the mathematical domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller violated an operation's contract (e.g. stepped an illegal action).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Config file syntax error with the offending line number.
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    /// A parsed config violates a scenario invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// An instance is too large for exhaustive enumeration.
    #[error("instance too large: {0}")]
    SizeGuard(String),

    /// A CSV or artifact file does not match the documented schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Plot rendering failed.
    #[error("render error: {0}")]
    Render(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

impl SimError {
    /// Process exit code for the CLI: validation problems exit 1, runtime
    /// failures exit 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config { .. } | SimError::Validation(_) => 1,
            _ => 2,
        }
    }
}
