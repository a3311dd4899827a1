//! Library half of the `mvd` binary: config ingestion, problem assembly,
//! command implementations, and the CSV/JSON emitters. Kept as a library
//! so integration tests can drive everything without spawning processes.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

/// Exit codes, disjoint and stable:
/// 0 success, 1 I/O failure, 2 config error, 3 stability rejection,
/// 4 non-finite solver state, 5 convergence-level failure,
/// 6 builtin-oracle failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stability rejection: {0}")]
    Stability(String),
    #[error("solver failure: {0}")]
    NonFinite(String),
    #[error("convergence study failed: {0}")]
    LevelFailed(String),
    #[error("builtin verification failed: {0}")]
    OracleFailed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Stability(_) => 3,
            CliError::NonFinite(_) => 4,
            CliError::LevelFailed(_) => 5,
            CliError::OracleFailed(_) => 6,
        }
    }
}
