use thiserror::Error;

/// Errors raised anywhere in the simulation stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite entries in {0}")]
    NonFinite(String),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("operator {label} is not hermitian (deviation {deviation:.3e})")]
    NotHermitian { label: String, deviation: f64 },
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("limit not established for {quantity}: residual {residual:.3e}")]
    LimitNotEstablished { quantity: String, residual: f64 },
    #[error("divergent limit for {0}; no master equation exists in this regime")]
    Divergent(String),
    #[error("step size {dt:.3e} exceeds stability bound {bound:.3e}")]
    StepSize { dt: f64, bound: f64 },
    #[error("outcome {0} has zero probability")]
    ZeroProbability(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration at {path}: {message}")]
    Config { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
