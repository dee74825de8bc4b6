use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    #[error("singular Hessian in {0} fit after ridge fallback")]
    SingularHessian(&'static str),

    #[error("rank-deficient outcome design, collinear columns: {}", .columns.join(", "))]
    Collinear { columns: Vec<String> },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("estimation failed for every start: {}", .0.join("; "))]
    EstimationFailed(Vec<String>),

    #[error("constant factor column `{0}`: only one category observed")]
    ConstantFactor(String),

    #[error("ingestion failed: {0}")]
    Ingest(String),

    #[error("schema: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
