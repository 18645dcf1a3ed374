//! Crate-wide error type.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed arguments: shape mismatches, non-finite entries, bad
    /// tolerances, incompatible model families, unparsable specs/configs.
    InvalidInput(String),
    /// A stated precondition does not hold (e.g. a stability certificate
    /// requested at a non-interpolating parameter point).
    PreconditionViolated(String),
    /// A search completed without finding what was asked for (e.g. a
    /// stability onset that never occurs within the given sequence).
    NotFound(String),
    /// A numerical procedure finished but its self-check failed; carries
    /// enough detail to audit. Callers may treat this as fatal (`--strict`).
    NumericalWarning(String),
    /// I/O failure, with the offending path.
    Io { path: String, message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::PreconditionViolated(msg) => write!(f, "precondition violated: {msg}"),
            Error::NotFound(msg) => write!(f, "not found: {msg}"),
            Error::NumericalWarning(msg) => write!(f, "numerical warning: {msg}"),
            Error::Io { path, message } => write!(f, "io error on {path}: {message}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
