use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("duplicate report id {0:?}")]
    DuplicateId(String),

    #[error("unknown report id {0:?}")]
    UnknownId(String),

    #[error("duplicate link cycle through {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("collection has no duplicate links")]
    NoDuplicates,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid block weights {0:?}: must be nonnegative and sum to 1")]
    InvalidWeights([f64; 4]),

    #[error("empty summary in report {0:?}")]
    EmptySummary(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("negative distance {0}")]
    NegativeDistance(f64),

    #[error("{0}")]
    InvalidInput(String),

    #[error("invalid config at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("invalid trace pattern {pattern:?}: {source}")]
    Pattern {
        pattern: String,
        #[source]
        source: regex::Error,
    },

    #[error("id {0:?} is already indexed or cached")]
    AlreadyPresent(String),

    #[error("position {position} outside 1..={k} and not -1")]
    PositionOutOfRange { position: i64, k: usize },

    #[error("encoder endpoint failed: {0}")]
    Encoder(String),

    #[error("artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },

    #[error(transparent)]
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
