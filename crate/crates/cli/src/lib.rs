//! Command-line harness: configuration, experiment commands and the
//! invariant battery.

pub mod checks;
pub mod commands;
pub mod config;

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CliError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}
