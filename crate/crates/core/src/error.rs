use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    Shape {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("softmax row {row} is fully masked")]
    FullyMaskedRow { row: usize },

    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    Vocabulary { id: usize, vocab: usize },

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("sequence of length {len} is invalid: {reason}")]
    Sequence { len: usize, reason: &'static str },

    #[error("loss needs at least 2 tokens, got {len}")]
    InsufficientSequence { len: usize },

    #[error("context window full: {capacity} tokens")]
    WindowFull { capacity: usize },

    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("{flops} forward flops exceeds the desk-scale limit of {limit}")]
    TooLarge { flops: u128, limit: u128 },

    #[error("unknown preset {0:?}")]
    UnknownPreset(String),

    #[error("invalid training config: {0}")]
    Training(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
