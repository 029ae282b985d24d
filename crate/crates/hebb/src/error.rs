use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes are inconsistent.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A value became NaN/Inf or a numeric routine failed.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An argument is outside its valid range.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// The operation is not supported for this layer kind.
    #[error("capability error: {0}")]
    Capability(String),
    /// A file did not match its expected binary format.
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
