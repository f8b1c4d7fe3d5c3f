use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A line of a line-oriented input could not be parsed.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    /// A document parsed but broke one of the corpus invariants.
    #[error("document {doc_id}: {reason}")]
    InvalidDocument { doc_id: String, reason: String },

    #[error("annotation {index} ({start}+{length}) is not aligned with token boundaries")]
    Misaligned {
        index: usize,
        start: usize,
        length: usize,
    },

    #[error("annotations {first} and {second} overlap")]
    OverlappingAnnotations { first: usize, second: usize },

    #[error("invalid probability matrix for {doc_id}: {reason}")]
    InvalidMatrix { doc_id: String, reason: String },

    #[error("model {model_id}: {reason}")]
    EnsembleMismatch { model_id: String, reason: String },

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("label and token sequences differ in length ({labels} labels, {tokens} tokens)")]
    LengthMismatch { labels: usize, tokens: usize },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("document sets differ: missing from predictions {missing:?}, not in gold {extra:?}")]
    DocumentSetMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    #[error("zero embedding vector for ({mesh_id}, {synonym})")]
    ZeroVector { mesh_id: String, synonym: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("duplicate index entry ({mesh_id}, {synonym})")]
    DuplicateEntry { mesh_id: String, synonym: String },

    #[error("invalid concept record {mesh_id}: {reason}")]
    InvalidRecord { mesh_id: String, reason: String },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid refinement input: {0}")]
    InvalidRefinement(String),

    #[error("unsupported combination: task {task} with style {style}")]
    UnsupportedCombination { task: String, style: String },

    #[error("invalid prompt input: {0}")]
    InvalidPrompt(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }
}
