use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{op}: non-finite value at flat index {index}")]
    NonFinite { op: &'static str, index: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("gradients are not available before a backward pass")]
    NoGradient,

    #[error("transition row for stage {stage} has no counts; enable add-one smoothing (msc.laplace) to fit sparse data")]
    EmptyTransitionRow { stage: &'static str },

    #[error("EDF: missing bytes {start}..{end} ({what})")]
    EdfTruncated {
        what: String,
        start: usize,
        end: usize,
    },

    #[error("EDF: field `{field}` at byte {offset}: {reason}")]
    EdfField {
        field: String,
        offset: usize,
        reason: String,
    },

    #[error("{}: no channel `{requested}`; available: {}", path.display(), available.iter().map(|a| format!("\"{a}\"")).collect::<Vec<_>>().join(", "))]
    UnknownChannel {
        path: PathBuf,
        requested: String,
        available: Vec<String>,
    },

    #[error("EDF annotations: {0}")]
    Tal(String),

    /// A malformed input file; `location` is e.g. `line 4` or `byte 12288`.
    #[error("{}: {location}: {reason}", path.display())]
    Contract {
        path: PathBuf,
        location: String,
        reason: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn contract(path: &std::path::Path, location: impl ToString, reason: impl ToString) -> Self {
        Error::Contract {
            path: path.to_path_buf(),
            location: location.to_string(),
            reason: reason.to_string(),
        }
    }

    /// True for failures caused by numerics (NaN/Inf) rather than bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::NonFiniteLoss { .. } | Error::NonFiniteGradient { .. }
        )
    }
}
