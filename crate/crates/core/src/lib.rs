//! # coherence-mi
//!
//! Estimators of squared-loss mutual information (SMI) built from
//! second-order statistics on explicit feature maps.
//!
//! SMI is the Pearson chi-squared divergence between a joint distribution and
//! the product of its marginals. It upper-bounds Shannon MI, `ln(1 + SMI)`
//! is the second-order Rényi MI, and half of it approximates Shannon MI in the
//! weak-dependence regime. For finite alphabets it is the squared Frobenius
//! norm of a coherence matrix, i.e. the sum of squared canonical correlations
//! of indicator (or simplex) features. For real-valued data the same
//! canonical-correlation recipe runs on sampled characteristic-function
//! features `exp(j alpha n x)`, regularized by a Gaussian taper that amounts
//! to adding virtual independent noise of variance `sigma2` to both sources.
//!
//! Modules:
//! - [`measures`]: exact quantities on known mass functions.
//! - [`discrete`]: plug-in SMI / HGR for symbol streams, divergence transition matrix.
//! - [`analog`]: the characteristic-feature SMI estimator and its parameter rules.
//! - [`szego`]: the Fourier-diagonal approximation of the analog estimator.
//! - [`simulate`]: synthetic sources and Monte-Carlo genie oracles.
//! - [`cli`]: command implementations, CSV I/O and experiment sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod analog;
pub mod cli;
pub mod discrete;
mod error;
pub mod linalg;
pub mod measures;
pub mod simulate;
pub mod szego;

pub use error::{Error, Result};

/// Non-fatal conditions reported alongside an estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Some symbols never occur; they were dropped (pseudo-inverse branch).
    UnseenSymbols { x_missing: usize, y_missing: usize },
    /// Fewer samples than feature dimensions.
    FewSamples { samples: usize, dim: usize },
    /// Floored eigenvalues carry more than 10% of an autocorrelation trace.
    IllConditioned { floored_fraction: f64 },
    /// Approximate eigenvalues clipped before the element-wise inverse root.
    ClippedBins { count: usize },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::UnseenSymbols { x_missing, y_missing } => {
                write!(f, "{x_missing} x-symbols and {y_missing} y-symbols never occur; estimated on the observed alphabet")
            }
            Warning::FewSamples { samples, dim } => {
                write!(f, "only {samples} samples for feature dimension {dim}")
            }
            Warning::IllConditioned { floored_fraction } => {
                write!(f, "floored eigenvalues hold {:.1}% of the autocorrelation trace", 100.0 * floored_fraction)
            }
            Warning::ClippedBins { count } => write!(f, "{count} spectral bins clipped"),
        }
    }
}

/// An estimated value together with any warnings raised while computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub warnings: Vec<Warning>,
}

impl Estimate {
    pub fn clean(value: f64) -> Self {
        Self { value, warnings: Vec::new() }
    }
}
