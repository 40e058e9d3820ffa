//! Command-line driver: configuration, checkpoints, CSV results and plots
//! around the `difflink-core` experiments.

pub mod checkpoint;
mod commands;
pub mod config;
pub mod plot;
pub mod results;

pub use commands::{ber_columns, run, Cli, Command, Flags};

/// Failure classes, each with its own process exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    /// 2 for configuration, 3 for training, 4 for I/O and checkpoint
    /// problems, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Training(_) => 3,
            CliError::Io(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<checkpoint::CheckpointError> for CliError {
    fn from(e: checkpoint::CheckpointError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<difflink_core::Error> for CliError {
    fn from(e: difflink_core::Error) -> Self {
        use difflink_core::Error;
        match e {
            Error::Training { .. } => CliError::Training(e.to_string()),
            Error::Domain(_) | Error::State(_) => CliError::Config(e.to_string()),
            Error::Dimension(_) | Error::Numeric(_) => CliError::Other(e.to_string()),
        }
    }
}
