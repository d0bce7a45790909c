use thiserror::Error;

/// Errors raised by the library. Each variant maps onto one CLI exit class.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Arguments are individually valid but inconsistent with each other.
    #[error("argument error: {0}")]
    Argument(String),

    /// The requested computation would exceed a configured budget.
    #[error("resource error: {what} (estimated {estimate}, limit {limit})")]
    Resource {
        what: String,
        estimate: f64,
        limit: f64,
    },

    /// A quantity that must be exact (up to rounding) was not.
    #[error("numerical integrity error: {0}")]
    NumericalIntegrity(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
