//! Error type shared by the whole crate.

use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible dimensions (matrix shapes, vector lengths, empty inputs).
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A scalar argument violated its contract (tilt sign, fractions, rates).
    #[error("invalid parameter: {0}")]
    Param(String),

    /// A value fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// NaN or infinity appeared where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Malformed input file; `line` is 1-based and counts the header.
    #[error("parse error in {path} at line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    /// A metric has no defined value on the given input.
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// An API precondition tying two values together was broken.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the CLI: 1 usage/parse, 2 divergence,
    /// 3 undefined metric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Diverged { .. } => 2,
            Error::UndefinedMetric(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
