//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes are incompatible with the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// A computation produced or received a non-finite value.
    #[error("numerics error: {0}")]
    Numerics(String),

    /// An operation was called out of order (e.g. backward before forward).
    #[error("state error: {0}")]
    State(String),

    /// Invalid configuration value or unknown name.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset-level problem (empty set, size mismatch, missing files).
    #[error("data error: {0}")]
    Data(String),

    /// Input violates a metric's domain assumptions.
    #[error("domain error: {0}")]
    Domain(String),

    /// Checkpoint architecture does not match what the caller expects.
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),

    /// Malformed checkpoint or raw tensor file.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn numerics(msg: impl Into<String>) -> Self {
        Error::Numerics(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format { offset, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
