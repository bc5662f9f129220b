use thiserror::Error;

/// Crate-wide error type.
///
/// `InvalidParameter` and `Format` flag caller mistakes (bad configuration or
/// malformed files); `Refused` and the numeric variants signal that an
/// operation declined to produce a value it cannot stand behind (for example
/// an exhaustive enumeration past its size bound, or a near-singular
/// diffusion matrix).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("path not admissible: {0}")]
    NotAdmissible(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn refused(msg: impl Into<String>) -> Self {
        Error::Refused(msg.into())
    }
}
