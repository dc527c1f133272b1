use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("flow failed validation: {0}")]
    Validation(ValidationReport),

    #[error("tabulated cost queried at {query}, table covers [0, {max}]")]
    TableRange { query: f64, max: f64 },

    #[error("{what} exceeds the size guard ({got} > {limit})")]
    GuardExceeded {
        what: &'static str,
        limit: usize,
        got: usize,
    },

    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("unknown or missing format tag: {0}")]
    Format(String),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
