//! Library half of the `pq` binary: configuration, experiment execution,
//! and report emission.

pub mod config;
pub mod report;
pub mod runner;

use thiserror::Error;

/// Errors mapped to process exit codes: configuration problems exit 1, data
/// problems 2, execution failures 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("execution failure: {0}")]
    Execution(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Execution(_) => 3,
        }
    }
}
