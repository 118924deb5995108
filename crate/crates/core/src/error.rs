use std::path::PathBuf;

/// Errors raised anywhere in the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },

    #[error("{op}: {msg}")]
    Op { op: &'static str, msg: String },

    #[error("backward already ran on this tape; call reset() first")]
    BackwardTwice,

    #[error("triplet {index}: {msg}")]
    Triplet { index: usize, msg: String },

    #[error("{role} graph: {source}")]
    GraphRole {
        role: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid document {case_id}: {msg}")]
    Document { case_id: String, msg: String },

    #[error("unknown prompt role `{0}`")]
    UnknownRole(String),

    #[error("embedding width mismatch: expected {expected}, found {found} (line {line})")]
    WidthMismatch {
        expected: usize,
        found: usize,
        line: usize,
    },

    #[error("duplicate embedding key {0} with conflicting vectors")]
    ConflictingKey(String),

    #[error("prompt key collision: {key} maps to two different prompts")]
    KeyCollision { key: String },

    #[error("non-finite embedding value on line {0}")]
    NonFiniteEmbedding(usize),

    #[error("{count} embedding keys missing, e.g. {sample:?}")]
    MissingKeys { count: usize, sample: Vec<String> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite gradient for tensor {0}")]
    NonFiniteGradient(String),

    #[error("readout over the global node requested, but the graph has no global node")]
    NoGlobalNode,

    #[error("similarity: {0}")]
    Similarity(String),

    #[error("loss exponent is not finite; temperature {tau} is likely too small")]
    LossOverflow { tau: f64 },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("unknown document id {0}")]
    UnknownDoc(String),

    #[error("query {0} missing from run")]
    MissingQuery(String),

    #[error("dimension mismatch: checkpoint expects {expected}, features have {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("synthetic corpus: {0}")]
    Synthetic(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn op(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Op {
            op,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
