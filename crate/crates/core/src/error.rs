use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numerical failure in channel {channel}: {detail}")]
    Numerical { channel: String, detail: String },
    #[error("hypothesis violated at r = {r}: {detail}")]
    Hypothesis { r: f64, detail: String },
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("divergence at t = {t}: H1 norm {norm} exceeds {limit}")]
    Divergence { t: f64, norm: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn resolution<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Resolution(msg.into()))
}
