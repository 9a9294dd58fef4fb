//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A schema, dataset, or alignment invariant was violated.
    #[error("schema violation: {0}")]
    Schema(String),

    /// Matrix or network shapes do not line up.
    #[error("shape mismatch: expected {expected}, got {got} ({context})")]
    ShapeMismatch {
        expected: String,
        got: String,
        context: String,
    },

    /// A configuration failed validation. Every offending field is listed.
    #[error("invalid config: {}", .0.join("; "))]
    Config(Vec<String>),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// An operation was called on a model in the wrong state
    /// (e.g. decoding through an unfrozen model).
    #[error("invalid model state: {0}")]
    ModelState(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(expected: impl Into<String>, got: impl Into<String>, context: &str) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
            context: context.to_string(),
        }
    }
}
