use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("backward root must be a scalar, got {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },

    #[error("cosine similarity of a zero-norm vector is undefined")]
    ZeroNormVector,

    #[error("unknown parameter: {0}")]
    UnknownParam(String),

    #[error("adapter already attached to {0}")]
    DuplicateAdapter(String),

    #[error("adapter target {name} must be a square weight matrix, got {rows}x{cols}")]
    BadAdapterTarget {
        name: String,
        rows: usize,
        cols: usize,
    },

    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },

    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error(
        "listwise input of length {len} = 2*{q_len} + {k}*({l}+1) exceeds max_seq_len {max}"
    )]
    ListwiseTooLong {
        q_len: usize,
        k: usize,
        l: usize,
        len: usize,
        max: usize,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("empty document cannot be compressed")]
    EmptyDocument,

    #[error("empty query")]
    EmptyQuery,

    #[error("candidate list is empty")]
    EmptyCandidates,

    #[error("duplicate doc id: {0}")]
    DuplicateDocId(String),

    #[error("duplicate query id: {0}")]
    DuplicateQueryId(String),

    #[error("finetune mode requires an initial checkpoint")]
    MissingCheckpoint,

    #[error("non-finite loss at step {step} on example {example}")]
    NonFiniteLoss { step: usize, example: String },

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: String, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("doc id not found in index: {0}")]
    DocNotFound(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
