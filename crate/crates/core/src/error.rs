//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor or layer dimensions. `context` names the operation
    /// and, where relevant, the offending layer index.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: String,
        got: String,
    },

    /// An operation was called in an invalid order (e.g. backward without forward).
    #[error("invalid state: {0}")]
    State(String),

    /// A value left the numeric domain (non-finite data, degenerate norms).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A configuration field failed validation.
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    /// A caller violated an API contract (self-positives, k out of range).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A file did not match its expected binary layout.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// A checkpoint was built for a different network topology.
    #[error("checkpoint/model topology mismatch: expected {expected}, got {got}")]
    TopologyMismatch { expected: String, got: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn shape(
        context: impl Into<String>,
        expected: impl Into<String>,
        got: impl Into<String>,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }

    /// True for errors that indicate bad user input rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
