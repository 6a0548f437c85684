use thiserror::Error;

/// Errors raised by the library.
///
/// Diagnostics that are expected outcomes (graph violations, invariant
/// breaches observed during a run) are returned as values, not as errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An API was used outside its contract (e.g. a stale estimate).
    #[error("usage error: {0}")]
    Usage(String),

    /// Scenario or stream configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Internal consistency check failed. Indicates a bug.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn internal(msg: impl Into<String>) -> Error {
    Error::Internal(msg.into())
}
