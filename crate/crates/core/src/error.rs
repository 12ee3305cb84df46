use alloc::string::String;

/// Errors raised by the simulation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid propagation spec: {0}")]
    InvalidSpec(&'static str),
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("grid {rows}x{cols} exceeds the direct-convolution cap of {cap}x{cap}")]
    OracleCap { rows: usize, cols: usize, cap: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid beam splitter: {0}")]
    InvalidSplitter(String),
    #[error("invalid detector layout: {0}")]
    InvalidLayout(String),
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
}

/// Result alias for the core.
pub type Result<T> = core::result::Result<T, Error>;
