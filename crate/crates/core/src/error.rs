use std::path::PathBuf;

use crate::autodiff::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left} and {right}")]
    Shape {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("{op}: {msg}")]
    InvalidOp { op: &'static str, msg: String },

    #[error("loss must be a scalar, got shape {0}")]
    NonScalarLoss(Shape),

    #[error("non-finite {what} for parameter `{param}`")]
    NonFinite { what: &'static str, param: String },

    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("empty sentence")]
    EmptySentence,

    #[error("temperature must be positive, got {0}")]
    Temperature(f64),

    #[error("epoch fraction must be non-negative, got {0}")]
    EpochFraction(f64),

    #[error("tree has {leaves} leaves but sentence has {tokens} tokens")]
    TreeMismatch { leaves: usize, tokens: usize },

    #[error("tree size must be at least 1")]
    EmptyTree,

    #[error("bracketed tree: {msg} at position {pos}")]
    Bracketed { msg: String, pos: usize },

    #[error("{path}:{line}: {msg}")]
    Data {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("empty vector file {0}")]
    EmptyVectorFile(String),

    #[error("PCA target dimension {k} exceeds input dimension {d}")]
    PcaDimension { k: usize, d: usize },

    #[error("ranking item {index}: {msg}")]
    Ranking { index: usize, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint truncated or malformed at byte offset {offset}: {msg}")]
    CheckpointParse { offset: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Data {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }
}
