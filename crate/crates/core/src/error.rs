use thiserror::Error;

/// Errors raised by the LCMPC library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("harmonic order {order} at omega*tau = {phi} violates the Nyquist bound")]
    Nyquist { order: usize, phi: f64 },

    #[error("matrix exponential produced non-finite entries")]
    NonFiniteExponential,

    #[error("singular transformation matrix")]
    SingularTransform,

    #[error("insufficient disturbance history: need {needed} samples per channel, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("window of {len} samples is not an integer number of {period}-sample periods")]
    IncoherentWindow { len: usize, period: f64 },

    #[error("fundamental amplitude is zero; THD is undefined")]
    ZeroFundamental,

    #[error("trajectory norm exceeded {bound:e} at step {step}")]
    Overflow { step: usize, bound: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
