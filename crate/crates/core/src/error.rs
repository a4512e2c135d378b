use thiserror::Error;

use crate::kernel::SimTime;

/// Errors raised while a simulation is running.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("event scheduled at {at} but the kernel is already at {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },

    #[error("random stream label must not be empty")]
    EmptyStreamLabel,
}

/// A configuration value that violates a model invariant.
///
/// `field` is the dotted path of the offending entry, e.g. `connection.interval_ms`.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Prefix the field path with a section name.
    pub fn within(mut self, section: &str) -> Self {
        self.field = format!("{section}.{}", self.field);
        self
    }
}

/// Top-level error for the experiment harness and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),

    #[error("could not parse configuration: {0}")]
    Parse(String),

    #[error("simulation error: {0}")]
    Sim(#[from] SimError),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse(_) => 2,
            Error::Sim(_) | Error::Io(_) => 1,
        }
    }
}
