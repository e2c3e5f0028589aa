use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("mode index {index} out of range for {dim} modes")]
    Index { index: usize, dim: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Phases that no measurement constrains, as 0-based (row, column-slot) pairs.
    #[error("underdetermined phases: {phases:?}")]
    Underdetermined { phases: Vec<(usize, usize)> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub(crate) fn check_index(index: usize, dim: usize) -> Result<()> {
    if index < dim {
        Ok(())
    } else {
        Err(Error::Index { index, dim })
    }
}
