use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("sample too small: {0}")]
    Size(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("design matrix is rank deficient; offending columns {columns:?}")]
    Singular { columns: Vec<usize> },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("solver did not converge (optimality gap {gap:.3e})")]
    Convergence { gap: f64 },
    #[error("{failed} of {total} replications failed")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    /// True for errors that stem from the numerical content of the data
    /// rather than from how the call was configured.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. } | Error::Numeric(_) | Error::Convergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
