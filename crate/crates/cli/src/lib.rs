//! Pipeline driver around the mechsyn library: six stages (generate, label,
//! train, optimize, mine, report) that hand data to each other through CSV
//! and JSON files in a run directory, tracked by a hashed manifest.

pub mod config;
pub mod manifest;
pub mod report;
pub mod stages;

use thiserror::Error;

/// Stage failures, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or inconsistent configuration. Exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Missing, malformed, or tampered input data. Exit code 3.
    #[error("data error: {0}")]
    Data(String),
    /// The numerics refused: training diverged, no feasible individual, and
    /// the like. Exit code 4.
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}
