use thiserror::Error;

/// Errors produced by the estimation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the domain of a distribution or transformation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data violate a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical procedure failed to produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A site identifier was not found in the data set.
    #[error("unknown site id `{0}`")]
    UnknownSite(String),

    /// Estimator name not present in the registry.
    #[error("unknown estimator `{0}`")]
    UnknownEstimator(String),

    /// Malformed tabular data.
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
