use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid point set: {0}")]
    InvalidPoints(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate weights: every row has zero sampling weight")]
    DegenerateWeights,

    #[error("rank-deficient dataset: every {k}-subset has zero volume")]
    RankDeficient { k: usize },

    #[error("cannot find a full-rank initial {k}-subset for the volume walk")]
    NoFullRankStart { k: usize },

    #[error("enumeration too large: {what} ({size} > {limit})")]
    EnumerationTooLarge {
        what: &'static str,
        size: f64,
        limit: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pass aborted at row {row}: {reason}")]
    PassAborted { row: usize, reason: String },

    #[error("random row access is not available on a streaming source")]
    StreamingAccess,

    #[error("zero error: the current subset already fits the data exactly")]
    ExactFit,

    #[error("report error: {0}")]
    Report(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
