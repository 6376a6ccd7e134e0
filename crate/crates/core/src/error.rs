use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dialogue")]
    EmptyDialogue,

    #[error("invalid dialogue: {0}")]
    InvalidDialogue(String),

    #[error("span ({start}, {end}) out of range for {len} tokens")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("degenerate cluster: two mentions share first token {0}")]
    DegenerateCluster(usize),

    #[error("overlapping clusters at token {0}")]
    OverlappingClusters(usize),

    #[error("ensemble: {0}")]
    Ensemble(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("zero-norm attention matrix")]
    ZeroNorm,

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("vocabulary hash mismatch: checkpoint {expected}, tokenizer {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("input of {len} tokens exceeds max length {max}")]
    TooLong { len: usize, max: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// Process exit code for this failure class: 2 I/O, 3 validation, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 2,
            Error::NonFinite(_) | Error::ZeroNorm | Error::Shape { .. } => 4,
            _ => 3,
        }
    }
}
