use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown token: {0}")]
    UnknownToken(String),

    #[error("duplicate token: {0}")]
    DuplicateToken(String),

    #[error("zero-norm vector for token: {0}")]
    ZeroNorm(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training set contains a single class only")]
    SingleClass,

    #[error("nothing to learn: both the sample set and the detector bank are empty")]
    NothingToLearn,

    #[error(
        "solver did not converge within {passes} passes (KKT violation {violation:.3e}, tolerance {tolerance:.3e})"
    )]
    NonConvergence {
        passes: usize,
        violation: f64,
        tolerance: f64,
    },

    #[error("qp oracle supports at most {limit} samples, got {got}")]
    OracleTooLarge { limit: usize, got: usize },

    #[error("primal weights are defined for the linear kernel only")]
    NonLinearPrimal,

    #[error("average precision is undefined: no relevant items")]
    UndefinedAveragePrecision,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
