use thiserror::Error;

/// Errors raised by the scattering engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violates the documented precondition of an operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The requested quantity has no finite value for the given input
    /// (e.g. g²[0] of a state with zero mean photon number).
    #[error("undefined value: {0}")]
    UndefinedValue(String),
    /// Malformed tabular or textual input.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn undefined(msg: impl Into<String>) -> Error {
    Error::UndefinedValue(msg.into())
}
