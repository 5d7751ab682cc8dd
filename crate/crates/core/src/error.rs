use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad schema header: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("{path}: {failed} of {total} records malformed (rate {rate:.4} above limit {limit}); first failing lines: {lines:?}")]
    TooManyBadRecords {
        path: PathBuf,
        failed: usize,
        total: usize,
        rate: f64,
        limit: f64,
        lines: Vec<usize>,
    },

    #[error("binary format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("column {column:?} has no observed values in the training rows")]
    AllMissingColumn { column: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code: 2 for configuration errors, 3 for bad or missing
    /// input data, 4 for failures while a stage runs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. }
            | Error::Schema { .. }
            | Error::TooManyBadRecords { .. }
            | Error::Format { .. }
            | Error::InvalidInput(_)
            | Error::AllMissingColumn { .. } => 3,
            Error::NonFiniteLoss { .. } | Error::Stage { .. } => 4,
        }
    }
}
