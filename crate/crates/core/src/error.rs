use thiserror::Error;

use crate::lasso::LassoModel;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("unknown GEMS label {0:?}")]
    UnknownLabel(String),

    #[error("timestamps not strictly increasing at index {index}")]
    NonMonotonicTime { index: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("constant input: correlation undefined")]
    ConstantInput,

    #[error("need at least {needed} groups, got {got}")]
    TooFewGroups { needed: usize, got: usize },

    #[error("need at least 2 annotators, got {0}")]
    TooFewAnnotators(usize),

    #[error("degenerate contingency table: {0}")]
    DegenerateTable(String),

    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),

    #[error("lasso did not converge after {sweeps} sweeps")]
    NotConverged {
        sweeps: usize,
        best: Box<LassoModel>,
    },

    #[error("feature names differ between models")]
    NameMismatch,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("need at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("fold {fold}, media {media_id}: {source}")]
    InFold {
        fold: usize,
        media_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
