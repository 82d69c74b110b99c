use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the trace ingestion and detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed line: {msg}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate batch id {0:?} in manifest")]
    DuplicateBatchId(String),

    #[error("batch {batch_id:?} references missing file {path}")]
    MissingBatchFile { batch_id: String, path: PathBuf },

    #[error("batch {0:?} is unusable (fewer than 2 events)")]
    UnusableBatch(String),

    #[error("not enough data: {0}")]
    NotEnoughData(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training batch {0:?} is labeled rootkit; semi-supervised training requires normal data only")]
    MixedTrainingLabels(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
