use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum DerlError {
    /// An instance failed linear-MDP validation at construction time.
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// A policy, reward, or config does not fit the instance it is used with.
    #[error("configuration error: {0}")]
    Config(String),

    /// An algorithm or checker parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A numeric precondition failed (non-PSD matrix, non-positive pivot, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A caller broke a documented contract between arguments.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Discretized bonus matrices left the admissible cone.
    #[error("constraint violated: {0}")]
    Constraint(String),

    /// Planning or covariance estimation found no data where data is required.
    #[error("missing data: {0}")]
    MissingData(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = DerlError> = std::result::Result<T, E>;
