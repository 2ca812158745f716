use thiserror::Error;

use crate::symbolic::Validity;

pub type Result<T, E = CtsrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CtsrError {
    #[error("invalid tensor term `{term}`: {reason}")]
    InvalidTerm { term: String, reason: Validity },

    #[error("cannot parse term `{text}`: {message}")]
    Parse { text: String, message: String },

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("axis {axis} is clamped and has only {points} points; a centred stencil needs at least 3")]
    InsufficientMargin { axis: usize, points: usize },

    #[error("time derivative unavailable at snapshot {index} of {times} (needs a neighbour on both sides)")]
    TimeBoundary { index: usize, times: usize },

    #[error("unknown field `{0}`")]
    MissingField(String),

    #[error("sampling request exceeds available interior points: {0}")]
    NotEnoughPoints(String),

    #[error("non-finite value for candidate `{candidate}` at sample {sample}")]
    NonFinite { candidate: String, sample: usize },

    #[error("degenerate train/test split: {train} training rows, {test} test rows")]
    DegenerateSplit { train: usize, test: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("dataset format: {0}")]
    Format(String),

    #[error("ground-truth term `{0}` is not a library column")]
    UnresolvedTruth(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CtsrError {
    /// True for failures caused by the numbers rather than by the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CtsrError::NonFinite { .. } | CtsrError::Numerical(_)
        )
    }
}
