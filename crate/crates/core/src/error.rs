use thiserror::Error;

use crate::learner::FormatError;

#[derive(Debug, Error)]
pub enum CdlError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The atoms selected so far are (numerically) linearly dependent.
    #[error("rank-deficient support of size {0}")]
    RankDeficient(usize),

    #[error("image error: {0}")]
    Image(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CdlError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CdlError::InvalidInput(msg.into()))
}
