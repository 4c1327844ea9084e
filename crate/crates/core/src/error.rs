use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("score at index {0} is NaN")]
    NanScore(usize),

    #[error("no admissible split: 2·tau_e = {two_tau_e} exceeds the noisy count {n_tilde}")]
    NoAdmissibleSplit { two_tau_e: f64, n_tilde: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("instance too large for exact enumeration: {0}")]
    TooLarge(String),

    #[error("infeasible geometry: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
