use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    DimensionMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("shape mismatch for `{name}`: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("orthogonalization of an all-zero matrix is undefined")]
    ZeroMatrix,

    #[error("SVD did not converge within {budget} sweeps")]
    SvdNoConvergence { budget: usize },

    #[error("matrix too large for the SVD oracle: {rows}x{cols} (limit {limit})")]
    TooLarge { rows: usize, cols: usize, limit: usize },

    #[error("parameter `{name}` must be 2D for Muon, has shape {shape:?}")]
    NotMatrix { name: String, shape: Vec<usize> },

    #[error("parameter `{name}` is in the {group} group but carries {state} state")]
    StateKindMismatch {
        name: String,
        group: &'static str,
        state: &'static str,
    },

    #[error("no optimizer state for parameter `{0}`")]
    MissingState(String),

    #[error("unknown parameter role `{0}`")]
    UnknownRole(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("item id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: usize, vocab_size: usize },

    #[error("target item {0} is in the exclusion set")]
    TargetExcluded(usize),

    #[error("no ranks to aggregate")]
    EmptyRanks,

    #[error("observation at step {step} is not after step {last}")]
    OutOfOrderStep { step: u64, last: u64 },

    #[error("{path}: missing or invalid header, expected `user_id,item_id,timestamp`")]
    MissingHeader { path: PathBuf },

    #[error("{path}: {malformed} of {total} lines malformed (more than 1%)")]
    TooManyMalformed {
        path: PathBuf,
        malformed: usize,
        total: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset fingerprints differ: {0} vs {1}")]
    FingerprintMismatch(String, String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
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
