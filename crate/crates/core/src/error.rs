use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("{locator}: {message}")]
    Parse { locator: String, message: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero-norm vector has no defined angle")]
    ZeroNorm,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("document `{0}` was already reviewed")]
    AlreadyReviewed(String),

    #[error("invalid feedback: {0}")]
    InvalidFeedback(String),

    #[error("unknown session `{0}`")]
    UnknownSession(String),

    #[error("stale submission: {0}")]
    Conflict(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(locator: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse { locator: locator.into(), message: message.to_string() }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}
