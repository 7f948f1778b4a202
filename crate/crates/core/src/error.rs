//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("non-finite value in {field} at cell {cell}")]
    NonFinite { field: &'static str, cell: usize },
    #[error("invalid forcing: {0}")]
    Forcing(String),
    #[error("invalid parameter {name}: {msg}")]
    Param { name: &'static str, msg: String },
    #[error("cell index {0} out of range")]
    Index(usize),
    #[error("closure failure: {0}")]
    Closure(String),
    #[error("admissibility violated at cell {cell}: {msg}")]
    Admissibility { cell: usize, msg: String },
    #[error("numerical failure at t={t:.6e} (step {step}): {msg}")]
    Numerical { t: f64, step: usize, msg: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, msg: impl Into<String>) -> Self {
        Error::Param { name, msg: msg.into() }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Process exit code for this error: 2 for configuration or input problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Closure(_) | Error::Admissibility { .. } | Error::Numerical { .. } => 3,
            _ => 2,
        }
    }
}
