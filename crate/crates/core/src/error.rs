use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("invalid operation: {0}")]
    InvalidOperation(String),

    #[error("invalid tessellation: {0}")]
    InvalidTessellation(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("sampler: {0}")]
    Sampler(String),

    #[error("invalid point pattern: {0}")]
    InvalidPattern(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
