//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation precondition (bad dimensions, center
    /// out of bounds, mixed-polarity weight list, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration failed validation.
    #[error("invalid config: {0}")]
    Config(String),

    /// A binary file (DVSE stream, checkpoint) is malformed. `offset` is the
    /// byte position of the offending record or field.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// The file is recognizable but in a version/dialect this build does not
    /// decode.
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    /// Simulation state or input current became non-finite.
    #[error("numeric fault at step {step}: layer {layer}, neuron {neuron}")]
    NumericFault { step: u64, layer: usize, neuron: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format { offset, message: msg.into() }
    }
}
