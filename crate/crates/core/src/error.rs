use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: unknown cognitive level {label:?}")]
    UnknownLabel { line: u64, label: String },

    #[error("unknown cognitive level {0:?}")]
    UnknownLevelName(String),

    #[error("cognitive level ordinal {0} outside [0, 5]")]
    OrdinalOutOfRange(usize),

    #[error("line {line}: empty question text")]
    EmptyText { line: u64 },

    #[error("duplicate example id {0:?}")]
    DuplicateId(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot stratify {k} folds: class {level} has only {count} examples")]
    Stratification {
        k: usize,
        level: String,
        count: usize,
    },

    #[error("unknown encoder checkpoint {0:?}")]
    UnknownCheckpoint(String),

    #[error("{what}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("expected {expected} representation, found {found}")]
    BranchMismatch { expected: String, found: String },

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("model is not fitted")]
    NotFitted,

    #[error("unknown model {name:?}; registered: {known}")]
    UnknownModel { name: String, known: String },

    #[error("model {0:?} is reserved but has no implementation")]
    Unimplemented(String),

    #[error("tokenizer: {0}")]
    Tokenizer(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

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
