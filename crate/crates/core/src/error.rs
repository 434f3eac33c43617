use thiserror::Error;

/// Rejected parameter values, detected before any event runs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },

    #[error("could not read positions file {path}: {reason}")]
    Positions { path: String, reason: String },
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::InvalidValue {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// The configuration key the error refers to, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::InvalidValue { key, .. } => Some(key),
            ConfigError::Positions { .. } => None,
        }
    }
}

/// Errors raised while simulating.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("unknown vehicle id {0}")]
    UnknownVehicle(usize),

    #[error("MAC state machine violation: event {event} in phase {phase}")]
    StateMachine { phase: String, event: String },

    #[error("metric not ready: {0}")]
    NotReady(&'static str),

    #[error("cannot merge reports: {0}")]
    Merge(&'static str),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
