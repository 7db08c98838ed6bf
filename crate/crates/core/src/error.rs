use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("sampling failed after {0} consecutive rejections (degenerate domain?)")]
    RejectionCap(usize),

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("t = {t} is below the certified range of the spectral model (t_min = {t_min})")]
    OutsideCertifiedRange { t: f64, t_min: f64 },

    #[error("Bessel zero table exhausted: argument {0} exceeds the supported range")]
    BracketRange(f64),

    #[error("non-positive value {value} at index {index}; the estimate is undersampled")]
    NonPositive { index: usize, value: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LabError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        LabError::InvalidArgument(msg.into())
    }
}
