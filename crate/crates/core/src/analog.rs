//! SMI estimation for real-valued pairs on the characteristic feature space.
//!
//! Each sample is mapped to `exp(j alpha n x)` for `n = -K..K` (dimension
//! `N = 2K + 1`). The sample characteristic functions are tapered by the
//! Gaussian window `exp(-sigma2 alpha^2 n^2 / 2)`, which is exactly the
//! characteristic function of the virtual additive noise. From the tapered
//! statistics:
//!
//! - `R_x = Toe(p_a)` where `p_a[n] = <exp(j alpha n x)> w_a[n]`, `n = 0..N-1`,
//! - `C_xy = <x y^H> . (w w^T) - p q^H` on the symmetric grid,
//!
//! and the estimate is `|| R_x^{-1/2} C_xy R_y^{-1/2} ||_F^2`.
//!
//! The cross moment is the only `O(N^2 L)` step. It is accumulated in
//! blocks with real matrix products, and only the rows `n >= 0` are formed
//! since `M[-n, -m] = conj(M[n, m])`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, CMatrix, Whitener, C64};
use crate::{szego, Estimate, Warning};

/// Default support factor (effective CF support `k / sigma`).
pub const DEFAULT_K: f64 = 3.0;
/// Default dynamic-range factor.
pub const DEFAULT_Q: f64 = 2.5;
/// Default frequency sampling period for standardized data.
pub const DEFAULT_ALPHA: f64 = 1.0 / 3.0;

const ILL_CONDITIONED_FRACTION: f64 = 0.1;
const BLOCK: usize = 512;

/// Aligned real-valued sample pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RealPairedSamples {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl RealPairedSamples {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
        }
        if let Some(i) = x.iter().zip(&y).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Centered, unit mean-square copy (constant sequences become zeros).
    pub fn standardized(&self) -> Self {
        Self { x: standardize(&self.x), y: standardize(&self.y) }
    }

    /// The pairing `(x[l], y[(l + shift) mod L])`.
    pub fn with_y_shifted(&self, shift: usize) -> Self {
        let mut y = self.y.clone();
        if !y.is_empty() {
            let n = y.len();
            y.rotate_left(shift % n);
        }
        Self { x: self.x.clone(), y }
    }

    /// Larger of the two sample standard deviations.
    pub fn max_std(&self) -> f64 {
        std_dev(&self.x).max(std_dev(&self.y))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / v.len() as f64).sqrt()
}

fn standardize(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let m = mean(v);
    let s = std_dev(v);
    if s > 0.0 {
        v.iter().map(|a| (a - m) / s).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// `N = 2 ceil(k q sigma_x / sigma) + 1`.
pub fn dimension_from_sigma(k: f64, q: f64, sigma_x: f64, sigma: f64) -> Result<usize> {
    if !(k > 0.0 && q > 0.0 && sigma_x > 0.0 && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dimension rule needs positive inputs, got k={k} q={q} sigma_x={sigma_x} sigma={sigma}"
        )));
    }
    let half = (k * q * sigma_x / sigma).ceil();
    if !half.is_finite() || half > 1e6 {
        return Err(Error::InvalidParameter(format!("dimension rule overflows: K = {half}")));
    }
    Ok(2 * half as usize + 1)
}

/// Smoothing variance from the data size: `p L^{-2/5}`.
pub fn sigma_from_silverman(p: f64, samples: usize) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::InvalidParameter(format!("Silverman scale must be positive, got {p}")));
    }
    if samples == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    Ok(p * (samples as f64).powf(-0.4))
}

/// Parameters of the characteristic-space mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    /// Smoothing (virtual noise) variance.
    pub sigma2: f64,
    /// Frequency sampling period.
    pub alpha: f64,
    /// Feature dimension `N = 2K + 1`.
    pub dim: usize,
    pub k: f64,
    pub q: f64,
    /// Silverman scale, when `sigma2` was derived from it.
    pub silverman_p: Option<f64>,
    /// Center and scale both sources to unit mean square before mapping.
    pub standardize: bool,
}

impl FeatureConfig {
    /// Explicit parameters.
    pub fn new(sigma2: f64, alpha: f64, dim: usize) -> Result<Self> {
        let cfg = Self {
            sigma2,
            alpha,
            dim,
            k: DEFAULT_K,
            q: DEFAULT_Q,
            silverman_p: None,
            standardize: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Dimension derived from `sigma2` with the default `k`, `q`, `alpha` for
    /// standardized data (`sigma_x = 1`).
    pub fn from_sigma2(sigma2: f64) -> Result<Self> {
        Self::derived(sigma2, DEFAULT_K, DEFAULT_Q, 1.0)
    }

    /// Dimension derived from `sigma2`, `k`, `q` and the source scale.
    pub fn derived(sigma2: f64, k: f64, q: f64, sigma_x: f64) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
        }
        let dim = dimension_from_sigma(k, q, sigma_x, sigma2.sqrt())?;
        let mut cfg = Self::new(sigma2, DEFAULT_ALPHA, dim)?;
        cfg.k = k;
        cfg.q = q;
        Ok(cfg)
    }

    /// `sigma2 = p L^{-2/5}`, dimension from the default rule.
    pub fn silverman(p: f64, samples: usize) -> Result<Self> {
        let mut cfg = Self::from_sigma2(sigma_from_silverman(p, samples)?)?;
        cfg.silverman_p = Some(p);
        Ok(cfg)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.alpha = alpha;
        self.validate()?;
        Ok(self)
    }

    pub fn with_standardize(mut self, standardize: bool) -> Self {
        self.standardize = standardize;
        self
    }

    pub fn half_width(&self) -> usize {
        self.dim / 2
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.dim < 3 || self.dim.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("dimension must be odd and >= 3, got {}", self.dim)));
        }
        Ok(())
    }

    pub fn taper(&self) -> TaperVectors {
        TaperVectors::new(self.sigma2, self.alpha, self.dim)
    }
}

/// Gaussian tapers on the symmetric and one-sided grids, and the triangular
/// window used by the Fourier-diagonal approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct TaperVectors {
    /// `exp(-sigma2 alpha^2 (n - K)^2 / 2)`, `n = 0..N-1`.
    pub symmetric: Vec<f64>,
    /// `exp(-sigma2 alpha^2 n^2 / 2)`, `n = 0..N-1`.
    pub asymmetric: Vec<f64>,
    /// `1 - n / N`.
    pub triangular: Vec<f64>,
}

impl TaperVectors {
    pub fn new(sigma2: f64, alpha: f64, dim: usize) -> Self {
        let k = (dim / 2) as f64;
        let c = sigma2 * alpha * alpha / 2.0;
        Self {
            symmetric: (0..dim).map(|n| (-c * (n as f64 - k).powi(2)).exp()).collect(),
            asymmetric: (0..dim).map(|n| (-c * (n as f64).powi(2)).exp()).collect(),
            triangular: (0..dim).map(|n| 1.0 - n as f64 / dim as f64).collect(),
        }
    }
}

/// `exp(j alpha n x)` for `n = -K..K`.
pub fn map_to_feature(x: f64, cfg: &FeatureConfig) -> Vec<C64> {
    let k = cfg.half_width() as i64;
    (-k..=k).map(|n| C64::from_polar(1.0, cfg.alpha * n as f64 * x)).collect()
}

/// Tapered first- and second-order statistics of the mapped samples.
#[derive(Debug, Clone)]
pub struct FeatureStats {
    /// Tapered CF means on the symmetric grid `n = -K..K`.
    pub p_hat: Vec<C64>,
    pub q_hat: Vec<C64>,
    /// Tapered CF means on the one-sided grid `n = 0..N-1`; element 0 is 1.
    pub p_a: Vec<C64>,
    pub q_a: Vec<C64>,
    /// Tapered cross-covariance on the symmetric grid.
    pub cross: CMatrix,
    pub samples: usize,
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.p_hat.len()
    }

    pub fn autocorr_x(&self) -> CMatrix {
        hermitian_toeplitz(&self.p_a)
    }

    pub fn autocorr_y(&self) -> CMatrix {
        hermitian_toeplitz(&self.q_a)
    }
}

/// Hermitian Toeplitz matrix with first column `t`: `T[n][m] = t[n - m]`
/// for `n >= m` and `conj(t[m - n])` otherwise.
pub fn hermitian_toeplitz(t: &[C64]) -> CMatrix {
    let n = t.len();
    CMatrix::from_fn(n, n, |i, j| if i >= j { t[i - j] } else { t[j - i].conj() })
}

/// Marginal part of the statistics for one source.
#[derive(Debug, Clone)]
struct Marginal {
    /// Untapered `<z^n>` for `n = 0..N-1`.
    raw: Vec<C64>,
    /// Tapered symmetric-grid mean.
    sym: Vec<C64>,
    /// Tapered one-sided mean.
    one_sided: Vec<C64>,
}

fn fill_powers(z: C64, out: &mut [C64]) {
    let mut acc = C64::new(1.0, 0.0);
    for slot in out.iter_mut() {
        *slot = acc;
        acc *= z;
    }
}

fn marginal(data: &[f64], alpha: f64, taper: &TaperVectors) -> Marginal {
    let dim = taper.symmetric.len();
    let k = dim / 2;
    let mut total = vec![C64::new(0.0, 0.0); dim];
    let mut block = vec![C64::new(0.0, 0.0); dim];
    let mut pw = vec![C64::new(0.0, 0.0); dim];
    for chunk in data.chunks(BLOCK) {
        block.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
        for &v in chunk {
            fill_powers(C64::from_polar(1.0, alpha * v), &mut pw);
            for (b, p) in block.iter_mut().zip(&pw) {
                *b += p;
            }
        }
        for (t, b) in total.iter_mut().zip(&block) {
            *t += b;
        }
    }
    let l = data.len() as f64;
    let raw: Vec<C64> = total.iter().map(|t| t / l).collect();
    let sym = (0..dim)
        .map(|i| {
            let m = if i >= k { raw[i - k] } else { raw[k - i].conj() };
            m * taper.symmetric[i]
        })
        .collect();
    let one_sided = raw.iter().zip(&taper.asymmetric).map(|(m, w)| m * w).collect();
    Marginal { raw, sym, one_sided }
}

/// Untapered cross moment `M[i][j] = <exp(j alpha (i-K) x) exp(-j alpha (j-K) y)>`.
fn cross_moment(x: &[f64], y: &[f64], alpha: f64, dim: usize) -> CMatrix {
    let k = dim / 2;
    let rows = k + 1;
    let mut acc_re = DMatrix::<f64>::zeros(rows, dim);
    let mut acc_im = DMatrix::<f64>::zeros(rows, dim);
    let width = BLOCK.min(x.len().max(1));
    let mut xr = DMatrix::<f64>::zeros(rows, width);
    let mut xi = DMatrix::<f64>::zeros(rows, width);
    let mut yr = DMatrix::<f64>::zeros(width, dim);
    let mut yi = DMatrix::<f64>::zeros(width, dim);
    let mut pw = vec![C64::new(0.0, 0.0); rows];

    for (xc, yc) in x.chunks(BLOCK).zip(y.chunks(BLOCK)) {
        let b = xc.len();
        for (l, (&xv, &yv)) in xc.iter().zip(yc).enumerate() {
            // rows n = 0..K of x
            fill_powers(C64::from_polar(1.0, alpha * xv), &mut pw);
            for (n, p) in pw.iter().enumerate() {
                xr[(n, l)] = p.re;
                xi[(n, l)] = p.im;
            }
            // columns m = -K..K of y
            fill_powers(C64::from_polar(1.0, alpha * yv), &mut pw);
            for (m, p) in pw.iter().enumerate() {
                yr[(l, k + m)] = p.re;
                yi[(l, k + m)] = p.im;
                yr[(l, k - m)] = p.re;
                yi[(l, k - m)] = -p.im;
            }
        }
        let (xr_b, xi_b) = (xr.columns(0, b), xi.columns(0, b));
        let (yr_b, yi_b) = (yr.rows(0, b), yi.rows(0, b));
        // x conj(y) = (xr yr + xi yi) + j (xi yr - xr yi)
        acc_re.gemm(1.0, &xr_b, &yr_b, 1.0);
        acc_re.gemm(1.0, &xi_b, &yi_b, 1.0);
        acc_im.gemm(1.0, &xi_b, &yr_b, 1.0);
        acc_im.gemm(-1.0, &xr_b, &yi_b, 1.0);
    }

    let l = x.len() as f64;
    let mut m = CMatrix::zeros(dim, dim);
    for r in 0..rows {
        for c in 0..dim {
            let v = C64::new(acc_re[(r, c)], acc_im[(r, c)]) / l;
            // row r is frequency n = r, stored at index K + r
            m[(k + r, c)] = v;
            m[(k - r, dim - 1 - c)] = v.conj();
        }
    }
    m
}

fn tapered_cross(x: &[f64], y: &[f64], cfg: &FeatureConfig, taper: &TaperVectors, px: &Marginal, py: &Marginal) -> CMatrix {
    let dim = cfg.dim;
    let mut c = cross_moment(x, y, cfg.alpha, dim);
    for i in 0..dim {
        for j in 0..dim {
            c[(i, j)] = c[(i, j)] * (taper.symmetric[i] * taper.symmetric[j]) - px.sym[i] * py.sym[j].conj();
        }
    }
    c
}

fn prepared(s: &RealPairedSamples, cfg: &FeatureConfig) -> Result<RealPairedSamples> {
    cfg.validate()?;
    if s.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: s.len() });
    }
    Ok(if cfg.standardize { s.standardized() } else { s.clone() })
}

/// Single pass over the samples producing every tapered statistic.
pub fn compute_feature_stats(s: &RealPairedSamples, cfg: &FeatureConfig) -> Result<FeatureStats> {
    let data = prepared(s, cfg)?;
    let taper = cfg.taper();
    let px = marginal(data.x(), cfg.alpha, &taper);
    let py = marginal(data.y(), cfg.alpha, &taper);
    let cross = tapered_cross(data.x(), data.y(), cfg, &taper, &px, &py);
    debug_assert!((px.raw[0].re - 1.0).abs() < 1e-12);
    Ok(FeatureStats {
        p_hat: px.sym,
        q_hat: py.sym,
        p_a: px.one_sided,
        q_a: py.one_sided,
        cross,
        samples: data.len(),
    })
}

/// Whitened autocorrelations of both sources.
pub struct Whiteners {
    pub x: Whitener,
    pub y: Whitener,
}

impl Whiteners {
    pub fn new(stats: &FeatureStats) -> Self {
        Self { x: Whitener::new(&stats.autocorr_x()), y: Whitener::new(&stats.autocorr_y()) }
    }

    fn warnings(&self, stats: &FeatureStats) -> Vec<Warning> {
        let mut w = base_warnings(stats);
        let frac = self.x.floored_fraction.max(self.y.floored_fraction);
        if frac > ILL_CONDITIONED_FRACTION {
            w.push(Warning::IllConditioned { floored_fraction: frac });
        }
        w
    }
}

pub(crate) fn base_warnings(stats: &FeatureStats) -> Vec<Warning> {
    if stats.samples < stats.dim() {
        vec![Warning::FewSamples { samples: stats.samples, dim: stats.dim() }]
    } else {
        Vec::new()
    }
}

/// Squared Frobenius norm of `R_x^{-1/2} C_xy R_y^{-1/2}` from precomputed
/// statistics.
pub fn smi_from_stats(stats: &FeatureStats) -> Estimate {
    let wh = Whiteners::new(stats);
    let c = Whitener::coherence(&wh.x, &stats.cross, &wh.y);
    Estimate { value: frobenius_sq(&c), warnings: wh.warnings(stats) }
}

/// Regularized SMI estimate of a real-valued pair.
pub fn smi_analog(s: &RealPairedSamples, cfg: &FeatureConfig) -> Result<Estimate> {
    Ok(smi_from_stats(&compute_feature_stats(s, cfg)?))
}

/// Default circular shift for the bias-reduced estimator.
pub fn default_shift(samples: usize) -> usize {
    samples / 2
}

/// Which coherence evaluation to run on the feature statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Hermitian inverse square roots of the Toeplitz autocorrelations.
    Exact,
    /// Fourier-diagonal approximation with element-wise inverse roots.
    Fast,
}

/// Bias-reduced estimate: the aligned estimate minus the estimate on the
/// pairing with `y` circularly shifted by `shift`, which destroys the
/// dependence while keeping both marginals.
pub fn smi_bias_reduced_with(s: &RealPairedSamples, cfg: &FeatureConfig, shift: usize, method: Method) -> Result<Estimate> {
    if s.is_empty() || shift.is_multiple_of(s.len()) {
        return Err(Error::InvalidParameter(format!(
            "shift must not be a multiple of the sample count ({}), got {shift}",
            s.len()
        )));
    }
    let data = prepared(s, cfg)?;
    let taper = cfg.taper();
    let px = marginal(data.x(), cfg.alpha, &taper);
    let py = marginal(data.y(), cfg.alpha, &taper);
    let aligned = tapered_cross(data.x(), data.y(), cfg, &taper, &px, &py);
    let shifted_y = data.with_y_shifted(shift);
    let shifted = tapered_cross(data.x(), shifted_y.y(), cfg, &taper, &px, &py);
    let mut stats = FeatureStats {
        p_hat: px.sym,
        q_hat: py.sym,
        p_a: px.one_sided,
        q_a: py.one_sided,
        cross: aligned,
        samples: data.len(),
    };
    let (raw, floor) = match method {
        Method::Exact => {
            let wh = Whiteners::new(&stats);
            let raw = frobenius_sq(&Whitener::coherence(&wh.x, &stats.cross, &wh.y));
            let floor = frobenius_sq(&Whitener::coherence(&wh.x, &shifted, &wh.y));
            (Estimate { value: raw, warnings: wh.warnings(&stats) }, floor)
        }
        Method::Fast => {
            let raw = szego::smi_fast_from_stats(&stats);
            stats.cross = shifted;
            (raw, szego::smi_fast_from_stats(&stats).value)
        }
    };
    Ok(Estimate { value: raw.value - floor, warnings: raw.warnings })
}

/// Bias-reduced estimate with the exact coherence.
pub fn smi_bias_reduced(s: &RealPairedSamples, cfg: &FeatureConfig, shift: usize) -> Result<Estimate> {
    smi_bias_reduced_with(s, cfg, shift, Method::Exact)
}

/// Dispatch on method and optional bias reduction.
pub fn estimate(s: &RealPairedSamples, cfg: &FeatureConfig, method: Method, bias_shift: Option<usize>) -> Result<Estimate> {
    match (method, bias_shift) {
        (m, Some(shift)) => smi_bias_reduced_with(s, cfg, shift, m),
        (Method::Exact, None) => smi_analog(s, cfg),
        (Method::Fast, None) => szego::smi_analog_fast(s, cfg),
    }
}
