use thiserror::Error;

/// Errors raised by the chaoscope core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("frequency ω = 0 is excluded for {0}")]
    ZeroFrequency(&'static str),

    #[error("quadrature did not converge at ω = {omega} (estimated error {error:e})")]
    Quadrature { omega: f64, error: f64 },

    #[error("negative spectral density {value:e} at lattice frequency |ω| = {omega}")]
    NegativeDensity { omega: f64, value: f64 },

    #[error("no admissible constant down to 2^-{max_exponent}; worst frequency |ω| = {worst_omega} ({component} = {worst_value:e})")]
    NoAdmissibleConstant {
        max_exponent: u32,
        worst_omega: f64,
        worst_value: f64,
        component: &'static str,
    },

    #[error("covariance precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate samples: {0}")]
    Degenerate(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
