use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The symmetric part of A(y) has a nonpositive Rayleigh quotient at `point` in direction `xi`.
    #[error("ellipticity violated at y = {point:?}: quotient {quotient:e} in direction {xi:?}")]
    EllipticityViolation {
        point: Vec<f64>,
        xi: Vec<f64>,
        quotient: f64,
    },

    #[error("frequencies are resonant: n = {witness:?} gives n·λ = 0")]
    ResonantFrequencies { witness: Vec<i64> },

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NonConverged { iterations: usize, residual: f64 },

    #[error("field has no ellipticity certificate; call `certified` before assembling")]
    MissingCertificate,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
