use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for graph with {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("edge ({i}, {j}) has invalid weight {weight}; weights must be finite and > 0")]
    InvalidWeight { i: usize, j: usize, weight: f64 },

    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigenvalue iteration did not converge after {iterations} iterations (last estimate {estimate})")]
    NotConverged { iterations: usize, estimate: f64 },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("mask is empty")]
    EmptyMask,

    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("no precomputed operator for propagation `{0}`")]
    MissingOperator(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("bundle file missing: {0}")]
    MissingFile(PathBuf),

    #[error("bundle manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("not enough nodes: {0}")]
    InsufficientNodes(String),

    #[error("out of memory: {what} needs {bytes} bytes")]
    OutOfMemory { what: String, bytes: u128 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable numeric code per error family, used for process exit codes
    /// and for telling bundle failures apart in logs.
    pub fn code(&self) -> u8 {
        match self {
            Error::MissingFile(_) => 10,
            Error::ManifestMismatch(_) => 11,
            Error::IndexOutOfRange { .. } => 12,
            Error::Parse { .. } => 13,
            Error::InvalidWeight { .. } => 14,
            Error::InsufficientNodes(_) => 15,
            Error::Io(_) => 16,
            Error::Json(_) => 17,
            Error::OutOfMemory { .. } => 20,
            _ => 1,
        }
    }

    /// True for failures that originate in dataset ingestion.
    pub fn is_dataset_error(&self) -> bool {
        (10..=17).contains(&self.code())
    }
}
