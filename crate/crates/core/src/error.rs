//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed an invalid argument (empty context, zero horizon, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A configuration value is unsupported or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Sample generation failed (e.g. Cholesky did not converge after
    /// jitter escalation).
    #[error("generation error: {0}")]
    Generation(String),

    /// A non-finite value surfaced where the pipeline requires finite math.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Checkpoint serialization / validation failure.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn generation(msg: impl Into<String>) -> Self {
        Error::Generation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
