use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is missing, inconsistent or out of range.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was attempted in a state that does not allow it.
    #[error("state error: {0}")]
    State(String),

    /// A numerical procedure failed to produce a usable result.
    #[error("simulation diverged: {0}")]
    Divergence(String),

    /// A fitting procedure could not meet its acceptance tolerance.
    #[error("fit failure: {0}")]
    Fit(String),

    /// A file could not be parsed or written.
    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
