use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("index out of bounds: {0}")]
    OutOfBounds(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("undefined result: {0}")]
    Undefined(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
