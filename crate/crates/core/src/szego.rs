//! Fourier-diagonal approximation of the analog SMI estimator.
//!
//! A Hermitian Toeplitz matrix `T` with a square-summable generator is
//! asymptotically diagonalized by the unitary DFT `U`
//! (`U[k][n] = exp(-j 2 pi k n / N) / sqrt(N)`). The diagonal of `U T U^H` is
//! available from a single FFT of the triangularly windowed generator:
//!
//! `[U T U^H]_kk = 2 Re(FFT(t . v)_k) - 1`, `v_n = 1 - n / N`,
//!
//! which holds for every `N`; what vanishes as `N` grows is the off-diagonal
//! mass. The fast estimator therefore replaces `R^{-1/2}` by element-wise
//! inverse roots of those diagonals in the Fourier basis:
//!
//! `|| diag(p')^{-1/2} U C U^H diag(q')^{-1/2} ||_F^2`.

use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::analog::{base_warnings, compute_feature_stats, hermitian_toeplitz, FeatureConfig, FeatureStats, RealPairedSamples};
use crate::error::Result;
use crate::linalg::{frobenius_sq, CMatrix, C64};
use crate::{Estimate, Warning};

/// Floor applied to approximate eigenvalues before the inverse root.
pub const CLIP: f64 = 1e-6;

/// Approximate eigenvalue sequences of both autocorrelations.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedDiagonals {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl TransformedDiagonals {
    pub fn from_stats(stats: &FeatureStats) -> Self {
        Self { p: transformed_diagonal(&stats.p_a), q: transformed_diagonal(&stats.q_a) }
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }
}

/// Diagonal of `U T U^H` for the Hermitian Toeplitz matrix with first column
/// `t` (`t[0]` real). For `t = [1, 0, ..., 0]` this is all ones.
pub fn transformed_diagonal(t: &[C64]) -> Vec<f64> {
    let n = t.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<C64> = t.iter().enumerate().map(|(i, z)| z * (1.0 - i as f64 / n as f64)).collect();
    Plans::new(n).forward.process(&mut buf);
    // t[0] enters both triangles; the affine form assumes t[0] = 1 and
    // otherwise generalizes to 2 Re(.) - t[0].
    buf.iter().map(|z| 2.0 * z.re - t[0].re).collect()
}

/// `U C U^H` via column then row transforms.
pub fn unitary_transform(c: &CMatrix) -> CMatrix {
    assert!(c.is_square(), "unitary transform needs a square matrix");
    let n = c.nrows();
    if n == 0 {
        return c.clone();
    }
    let plans = Plans::new(n);
    let scale = 1.0 / (n as f64).sqrt();
    let mut out = c.clone();
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        buf.copy_from_slice(out.column(j).as_slice());
        plans.forward.process(&mut buf);
        for (i, z) in buf.iter().enumerate() {
            out[(i, j)] = z * scale;
        }
    }
    // right multiplication by U^H conjugates the kernel: inverse transform of each row
    for i in 0..n {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = out[(i, j)];
        }
        plans.inverse.process(&mut buf);
        for (j, z) in buf.iter().enumerate() {
            out[(i, j)] = z * scale;
        }
    }
    out
}

/// Off-diagonal Frobenius mass of `U T U^H` relative to the total, for the
/// Hermitian Toeplitz matrix generated by `t`.
pub fn toeplitz_diag_residual(t: &[C64]) -> f64 {
    let d = unitary_transform(&hermitian_toeplitz(t));
    let total = frobenius_sq(&d);
    if total == 0.0 {
        return 0.0;
    }
    let diag: f64 = d.diagonal().iter().map(|z| z.norm_sqr()).sum();
    ((total - diag) / total).max(0.0)
}

/// Largest gap between the sorted eigenvalues of the Toeplitz matrix and the
/// sorted transformed diagonal.
pub fn eigenvalue_discrepancy(t: &[C64]) -> f64 {
    let r = hermitian_toeplitz(t);
    let mut eig: Vec<f64> = r.symmetric_eigen().eigenvalues.iter().copied().collect();
    let mut diag = transformed_diagonal(t);
    eig.sort_by(f64::total_cmp);
    diag.sort_by(f64::total_cmp);
    eig.iter().zip(&diag).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn inverse_roots(d: &[f64], clipped: &mut usize) -> Vec<f64> {
    d.iter()
        .map(|&v| {
            if v < CLIP {
                *clipped += 1;
                1.0 / CLIP.sqrt()
            } else {
                1.0 / v.sqrt()
            }
        })
        .collect()
}

/// Fast estimate from precomputed statistics.
pub fn smi_fast_from_stats(stats: &FeatureStats) -> Estimate {
    let diags = TransformedDiagonals::from_stats(stats);
    let mut clipped = 0;
    let sp = inverse_roots(&diags.p, &mut clipped);
    let sq = inverse_roots(&diags.q, &mut clipped);
    let d = unitary_transform(&stats.cross);
    let mut value = 0.0;
    for j in 0..d.ncols() {
        for i in 0..d.nrows() {
            value += d[(i, j)].norm_sqr() * sp[i] * sp[i] * sq[j] * sq[j];
        }
    }
    let mut warnings = base_warnings(stats);
    if clipped > 0 {
        warnings.push(Warning::ClippedBins { count: clipped });
    }
    Estimate { value, warnings }
}

/// Fast approximate SMI of a real-valued pair.
pub fn smi_analog_fast(s: &RealPairedSamples, cfg: &FeatureConfig) -> Result<Estimate> {
    Ok(smi_fast_from_stats(&compute_feature_stats(s, cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_unitary(n: usize) -> CMatrix {
        let s = 1.0 / (n as f64).sqrt();
        CMatrix::from_fn(n, n, |k, m| C64::from_polar(s, -2.0 * std::f64::consts::PI * (k * m) as f64 / n as f64))
    }

    fn gaussian_generator(n: usize, c: f64) -> Vec<C64> {
        (0..n).map(|i| C64::from_polar((-c * (i * i) as f64).exp(), 0.3 * i as f64)).collect()
    }

    #[test]
    fn impulse_gives_all_ones() {
        let mut t = vec![C64::new(0.0, 0.0); 9];
        t[0] = C64::new(1.0, 0.0);
        assert!(transformed_diagonal(&t).iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn flat_generator_spikes_at_zero_frequency() {
        let n = 16;
        let d = transformed_diagonal(&vec![C64::new(1.0, 0.0); n]);
        assert!((d[0] - n as f64).abs() < 1e-12);
        assert!(d[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn diagonal_matches_dense_transform() {
        for n in [5, 16, 64] {
            let t = gaussian_generator(n, 0.02);
            let u = dense_unitary(n);
            let dense = &u * hermitian_toeplitz(&t) * u.adjoint();
            let fast = transformed_diagonal(&t);
            for k in 0..n {
                assert!((dense[(k, k)].re - fast[k]).abs() < 1e-10);
                assert!(dense[(k, k)].im.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fft_transform_matches_dense_product() {
        let n = 12;
        let c = CMatrix::from_fn(n, n, |i, j| C64::new((i as f64 * 0.7).sin(), (j as f64 * 1.3 - i as f64).cos()));
        let u = dense_unitary(n);
        let dense = &u * &c * u.adjoint();
        assert!((unitary_transform(&c) - dense).norm() < 1e-10);
    }

    #[test]
    fn residual_examples() {
        let mut id = vec![C64::new(0.0, 0.0); 16];
        id[0] = C64::new(1.0, 0.0);
        assert!(toeplitz_diag_residual(&id) < 1e-20);
        let r16 = toeplitz_diag_residual(&gaussian_generator(16, 0.05));
        let r128 = toeplitz_diag_residual(&gaussian_generator(128, 0.05));
        assert!(r128 < r16);
        let flat = toeplitz_diag_residual(&vec![C64::new(1.0, 0.0); 64]);
        let flat_big = toeplitz_diag_residual(&vec![C64::new(1.0, 0.0); 256]);
        assert!(flat < 1e-12 && flat_big < 1e-12, "flat generator is circulant");
        let ramp: Vec<C64> = (0..64).map(|i| C64::new(1.0 / (1.0 + i as f64).sqrt(), 0.0)).collect();
        assert!(toeplitz_diag_residual(&ramp) > 0.01);
    }

    #[test]
    fn eigenvalues_converge_to_diagonal() {
        let mut prev = f64::INFINITY;
        let mut inversions = 0;
        for n in [16, 32, 64, 128, 256] {
            let t = gaussian_generator(n, 0.2);
            let e = eigenvalue_discrepancy(&t);
            if e > prev {
                inversions += 1;
            }
            prev = e;
        }
        assert!(inversions <= 1);
        assert!(prev < 0.05);
    }

    #[test]
    fn constant_streams_give_zero() {
        let s = RealPairedSamples::new(vec![0.0; 20], vec![0.0; 20]).unwrap();
        let cfg = FeatureConfig::new(0.3, 0.5, 7).unwrap();
        assert!(smi_analog_fast(&s, &cfg).unwrap().value.abs() < 1e-20);
    }
}
