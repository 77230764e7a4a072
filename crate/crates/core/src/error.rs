//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by tensor ops, file formats, configuration and training.
#[derive(Debug, Error)]
pub enum Error {
    /// Two operands have incompatible shapes for the named operation.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A single tensor has a shape the operation cannot accept.
    #[error("dimension error in {op}: {msg} (shape {shape:?})")]
    Dimension {
        op: &'static str,
        msg: String,
        shape: Vec<usize>,
    },
    /// Coordinate or index outside the valid range.
    #[error("index error: {0}")]
    Index(String),
    /// Spatial extents too small or not divisible as required.
    #[error("size error: {0}")]
    Size(String),
    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Malformed file contents (bad magic, version, or payload length).
    #[error("format error: {0}")]
    Format(String),
    /// Invalid configuration value or combination.
    #[error("configuration error: {0}")]
    Config(String),
    /// Checkpoint does not match the expected parameter layout.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    /// Misuse of an API contract (e.g. backward from a non-scalar root).
    #[error("usage error: {0}")]
    Usage(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-parsable category label, used by the CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape",
            Error::Dimension { .. } => "dimension",
            Error::Index(_) => "index",
            Error::Size(_) => "size",
            Error::Numeric(_) => "numeric",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Usage(_) => "usage",
            Error::Io(_) => "io",
        }
    }
}
