//! Error type shared by the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Parameter outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),
    /// Matrix shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// The correlation matrix left its valid region.
    #[error("invalid state: {0}")]
    State(String),
    /// A decomposition, solve or quadrature failed.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
