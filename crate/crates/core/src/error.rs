//! Error type shared across the toolkit.

use thiserror::Error;

/// Errors produced by toolkit operations.
///
/// `InvalidArgument` covers every precondition violation (bad config values,
/// shape mismatches, out-of-range labels); the remaining variants are runtime
/// failures. The CLI maps the former to exit code 1 and the latter to 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Requested workload exceeds what the operation can satisfy, e.g. more
    /// cells than fit on a smear. Carries the largest feasible count.
    #[error("capacity exceeded: {detail} (max feasible: {max_feasible})")]
    Capacity { detail: String, max_feasible: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for precondition violations, false for runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidArgument(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
