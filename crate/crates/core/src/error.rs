use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("plant i/o: {0}")]
    PlantIo(String),

    #[error("template: {0}")]
    Template(String),

    #[error("no ACTION line found in response")]
    Parse,

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("config: {key}: {message}")]
    Config { key: String, message: String },

    #[error("log format (line {line}): {message}")]
    LogFormat { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures raised by a decision backend. The orchestrator turns these into
/// failed attempts rather than aborting the run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend returned status {0}")]
    Status(u16),

    #[error("malformed backend response: {0}")]
    Malformed(String),

    #[error("transport: {0}")]
    Transport(String),

    #[error("backend config: {0}")]
    Config(String),

    #[error("replay transcript exhausted after {0} calls")]
    ReplayExhausted(usize),
}
