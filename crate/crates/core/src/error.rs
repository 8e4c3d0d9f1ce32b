//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the classification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor constructor received an empty shape or a zero extent.
    #[error("invalid tensor shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    /// Two tensors cannot be combined by the named operation.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// A configuration value violates its documented constraints.
    #[error("invalid config: {0}")]
    Config(String),

    /// Input data violates a precondition (empty batch, bad label index, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// WAV container could not be decoded.
    #[error("wav decode: {0}")]
    Wav(#[from] WavError),

    /// A serialized store or feature file could not be loaded.
    #[error("file format: {0}")]
    Format(#[from] FormatError),

    /// Dataset manifest parse failure, pointing at the offending line.
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    /// A weight tensor is missing or has the wrong shape for the model config.
    #[error("weight store does not match config: tensor `{name}`: {reason}")]
    WeightMismatch { name: String, reason: String },

    /// A value does not fit in the requested storage precision.
    #[error("tensor `{tensor}`: value {value} is outside the binary16 range")]
    QuantizeRange { tensor: String, value: f64 },

    /// Training diverged.
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Distinct WAV decode failures.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WavError {
    #[error("malformed RIFF/WAVE header: {0}")]
    BadHeader(String),
    #[error("unsupported codec: {0}")]
    UnsupportedCodec(String),
    #[error("truncated chunk: {0}")]
    Truncated(String),
}

/// Distinct load failures for the binary weight and feature formats.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown dtype code {0}")]
    BadDtype(u8),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    BadChecksum { stored: u32, computed: u32 },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
}
