use std::path::PathBuf;

/// Errors produced by the workbench library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("duplicate id: {id}, line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("unknown attribute: {0}")]
    UnknownAttribute(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("records missing likes: {}", .0.join(", "))]
    MissingLikes(Vec<String>),

    #[error("rejected: {0}")]
    Rejected(String),

    #[error("no overlap between annotators {0} and {1}")]
    NoOverlap(String, String),

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {0} gold labels vs {1} predictions")]
    LengthMismatch(usize, usize),

    #[error("not enough labeled records for attribute {attribute}: {have} < {need}")]
    NotEnoughRecords {
        attribute: String,
        have: usize,
        need: usize,
    },

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("provider error: {0}")]
    Provider(String),

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

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
