use thiserror::Error;

/// Errors raised across the crate.
///
/// Rejections of individual transactions (a payer hitting its lower bound,
/// a borrower hitting the debt limit) are not errors; they are reported via
/// [`crate::ensemble::TransferOutcome`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("state space has {count} states, above the guard of {limit}")]
    StateExplosion { count: u128, limit: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
