use thiserror::Error;

/// Errors surfaced by model construction, inference, and evaluation.
#[derive(Debug, Error)]
pub enum NorError {
    /// Shapes of two arguments do not line up.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The request exceeds a hard capacity limit (e.g. enumeration width).
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    /// A computation produced or encountered a non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A word was requested that the co-occurrence statistics do not contain.
    #[error("word not present in co-occurrence statistics: {0}")]
    MissingWord(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, NorError>;
