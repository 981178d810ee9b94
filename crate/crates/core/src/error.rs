use thiserror::Error;

/// Errors raised by the estimators and the analytic layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mass function: {0}")]
    InvalidMass(String),

    #[error("divergence is infinite: q is zero at index {index} where p = {p}")]
    SupportMismatch { index: usize, p: f64 },

    #[error("zero marginal probability at {axis} index {index}")]
    ZeroMarginal { axis: &'static str, index: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("symbol {symbol} out of range for alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("non-finite sample at position {0}")]
    NonFinite(usize),

    #[error("codebook is rank deficient (smallest/largest singular value = {0:e})")]
    RankDeficientCodebook(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
