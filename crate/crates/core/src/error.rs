use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("degenerate column {column}: no observed entries")]
    DegenerateColumn { column: usize },

    #[error("missing rate for column {column} is {value}, must lie in [0, 1)")]
    InvalidMissingRate { column: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("empty selection not allowed")]
    EmptySelection,

    #[error("diverged: non-finite objective at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("diagnostic too large: {candidates} candidate supports exceed cap {cap}")]
    DiagnosticTooLarge { candidates: u128, cap: u128 },

    #[error("covariance not PD")]
    NotPositiveDefinite,

    #[error("residual variance degenerate for column {column} (value {value:e})")]
    ResidualVarianceDegenerate { column: usize, value: f64 },

    #[error("neighborhood fit failed for column {column}: {source}")]
    Column {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("dataset has no response column")]
    MissingResponse,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
