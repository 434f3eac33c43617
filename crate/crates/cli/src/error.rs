use std::path::PathBuf;

use beaconsim_core::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration. `origin` is `file:line`, `--set`, or a sweep point.
    #[error("{origin}: {message}")]
    Config { origin: String, message: String },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("simulation failed: {0}")]
    Sim(SimError),
}

impl CliError {
    pub fn config(origin: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { origin: origin.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit status for this error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Io { .. } => 3,
            CliError::Sim(_) => 4,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => CliError::config("config", c.to_string()),
            SimError::Io(source) => CliError::Io { path: PathBuf::from("<simulation input>"), source },
            other => CliError::Sim(other),
        }
    }
}
