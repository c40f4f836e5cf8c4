//! Config-driven runners for reconstruction, the slice-count scaling study,
//! estimator cross-checks and experiment-budget tables.

pub mod config;
pub mod output;
pub mod runs;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] pulsetomo::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }
}

/// Command-line values that replace fields of the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    /// Replaces the measurement model by this many shots per experiment.
    pub shots: Option<u64>,
}
