use nlt_sdp::{Certificate, SdpError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid measurement: {0}")]
    InvalidPovm(String),
    #[error("correlation is signaling (deviation {0:.3e})")]
    Signaling(f64),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("marginals are incompatible (certificate violation {:.3e})", .0.violation)]
    Incompatible(Certificate),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by size limits rather than bad input.
    pub fn is_capacity(&self) -> bool {
        matches!(self, Error::Capacity(_) | Error::Sdp(SdpError::Capacity(_)))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
