use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum TercError {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("estimator failure ({context}): {message}")]
    Estimator { context: String, message: String },
    #[error("estimator diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("column {0:?} is continuous; quantize it before using the plug-in estimator")]
    ContinuousColumn(String),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("power-set guard exceeded: {excluded} excluded variables (limit {limit}); use select_fast")]
    PowerSetGuard { excluded: usize, limit: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TercError>;
