use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("malformed upper set: {0}")]
    MalformedUpperSet(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("problem is unbounded in a direction outside the ordering cone: {0}")]
    Unbounded(String),
    #[error("no strictly feasible point: {0}")]
    NoInteriorPoint(String),
    #[error("numerical failure: {0}")]
    NumericFailure(String),
    #[error("solver aborted at node {node}: {reason}")]
    SolverAbort { node: String, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
