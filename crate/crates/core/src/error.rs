use thiserror::Error;

/// Errors produced while building designs, fitting models, or running studies.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("rank-deficient block for group {group}")]
    RankDeficient { group: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("objective became non-finite after {iterations} iterations")]
    NonFinite { iterations: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<S: Into<String>>(msg: S) -> Error {
    Error::Input(msg.into())
}
