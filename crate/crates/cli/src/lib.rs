//! Plumbing behind the `waqr` binary: configuration, CSV ingestion,
//! rolling-window fits and report emission.

pub mod config;
pub mod ingest;
pub mod report;
pub mod rolling;

use thiserror::Error;

/// Failures grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<waqr::Error> for CliError {
    fn from(e: waqr::Error) -> Self {
        use waqr::Error as E;
        match e {
            E::Parameter(_) => CliError::Config(e.to_string()),
            E::Degenerate(_) | E::Size(_) | E::Shape { .. } | E::Grid(_) => {
                CliError::Data(e.to_string())
            }
            E::Singular { .. }
            | E::Numeric(_)
            | E::Convergence { .. }
            | E::TooManyFailures { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
