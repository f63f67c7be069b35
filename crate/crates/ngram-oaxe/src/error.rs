//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite logit at batch {batch}, position {position}")]
    NonFiniteLogit { batch: usize, position: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),

    #[error("token id {id} out of range for vocab of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },

    #[error("pad token at position {position} is followed by a non-pad token")]
    PadNotSuffix { position: usize },

    #[error("cost matrix must be square, got {rows} rows and {cols} cols in row {row}")]
    NotSquare { rows: usize, cols: usize, row: usize },

    #[error("cost matrix is empty")]
    EmptyMatrix,

    #[error("non-finite cost at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },

    #[error("negative cost {value} at ({row}, {col})")]
    NegativeCost { row: usize, col: usize, value: f64 },

    #[error("brute force solver supports n <= {max}, got n = {n}")]
    BruteForceTooLarge { n: usize, max: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("ngram size must satisfy 1 <= N <= {max}, got {n}")]
    InvalidNgramSize { n: usize, max: usize },

    #[error("truncation margin must lie in [0, 1], got {0}")]
    InvalidMargin(f64),

    #[error("sentence of length {len} is shorter than ngram size {n}")]
    SentenceShorterThanNgram { len: usize, n: usize },

    #[error("training diverged with non-finite loss at step {step}")]
    Diverged { step: usize },

    #[error("mode_count exceeds {phrases}! = {max}")]
    ModeCountTooLarge { phrases: usize, max: usize },

    #[error("corpus line {line}: {message}")]
    CorpusParse { line: usize, message: String },

    #[error("checkpoint parse error: {0}")]
    CheckpointParse(String),

    #[error("vocab mismatch: {0}")]
    VocabMismatch(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("ngram size {n} exceeds every output length")]
    NgramLongerThanOutputs { n: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
