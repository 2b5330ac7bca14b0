use thiserror::Error;

pub type Result<T> = std::result::Result<T, StabError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is singular (pivot {pivot:e} below threshold {threshold:e})")]
    Singular { pivot: f64, threshold: f64 },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rank-deficient normal equations: {0}")]
    RankDeficient(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,
}

impl StabError {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        StabError::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        StabError::InvalidParameter(msg.into())
    }
}
