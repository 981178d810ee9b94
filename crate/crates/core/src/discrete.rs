//! Plug-in SMI and HGR estimation for finite alphabets.
//!
//! Symbols are mapped through a codebook (one complex column per symbol) and
//! the estimate is the squared Frobenius norm of the sample coherence matrix,
//! either in autocorrelation form `R_x^{-1/2} C_xy R_y^{-1/2}` or in
//! covariance form `C_x^{-1/2} C_xy C_y^{-1/2}`. Any square full-rank codebook
//! gives the same autocorrelation-form value; the covariance form needs only
//! `N - 1` dimensions, which the simplex codebook provides.
//!
//! All second-order statistics are formed from symbol counts, so the cost is
//! independent of the stream length once the counts are in hand. Symbols that
//! never occur are dropped before inversion.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, real_singular_values, singular_values, CMatrix, Whitener, C64};
use crate::measures::{JointMass, MassFunction};
use crate::{Estimate, Warning};

/// Aligned symbol streams over alphabets `[0, n)` and `[0, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePairedSamples {
    x: Vec<usize>,
    y: Vec<usize>,
    x_alphabet: usize,
    y_alphabet: usize,
}

impl DiscretePairedSamples {
    pub fn new(x: Vec<usize>, y: Vec<usize>, x_alphabet: usize, y_alphabet: usize) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
        }
        if x.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        if let Some(&s) = x.iter().find(|&&s| s >= x_alphabet) {
            return Err(Error::SymbolOutOfRange { symbol: s, alphabet: x_alphabet });
        }
        if let Some(&s) = y.iter().find(|&&s| s >= y_alphabet) {
            return Err(Error::SymbolOutOfRange { symbol: s, alphabet: y_alphabet });
        }
        Ok(Self { x, y, x_alphabet, y_alphabet })
    }

    /// Alphabet sizes taken as `max symbol + 1`.
    pub fn with_inferred_alphabets(x: Vec<usize>, y: Vec<usize>) -> Result<Self> {
        let n = x.iter().max().map_or(0, |m| m + 1);
        let m = y.iter().max().map_or(0, |m| m + 1);
        Self::new(x, y, n, m)
    }

    pub fn x(&self) -> &[usize] {
        &self.x
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn alphabets(&self) -> (usize, usize) {
        (self.x_alphabet, self.y_alphabet)
    }
}

/// Mapping matrix with one column per symbol. Must have full row rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook(CMatrix);

const CODEBOOK_RANK_TOL: f64 = 1e-10;

impl Codebook {
    pub fn new(vectors: CMatrix) -> Result<Self> {
        if vectors.nrows() == 0 || vectors.nrows() > vectors.ncols() {
            return Err(Error::InvalidParameter(format!(
                "codebook must be N'xN with 1 <= N' <= N, got {}x{}",
                vectors.nrows(),
                vectors.ncols()
            )));
        }
        let sv = singular_values(&vectors);
        let ratio = sv.last().copied().unwrap_or(0.0) / sv[0];
        if !(ratio > CODEBOOK_RANK_TOL) {
            return Err(Error::RankDeficientCodebook(ratio));
        }
        Ok(Self(vectors))
    }

    /// Canonical basis: indicator mapping.
    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn from_real(vectors: &DMatrix<f64>) -> Result<Self> {
        Self::new(vectors.map(|v| C64::new(v, 0.0)))
    }

    pub fn vectors(&self) -> &CMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn symbols(&self) -> usize {
        self.0.ncols()
    }

    /// Keeps the first `rows` coordinates.
    pub fn truncated(&self, rows: usize) -> Result<Self> {
        Self::new(self.0.rows(0, rows.min(self.dim())).into_owned())
    }

    fn select_columns(&self, keep: &[usize]) -> CMatrix {
        CMatrix::from_fn(self.dim(), keep.len(), |i, j| self.0[(i, keep[j])])
    }
}

/// Equidistant zero-mean points in `n - 1` dimensions, one per symbol.
///
/// Built by Gram-Schmidt on the centered canonical vectors `e_i - 1/n`, then
/// each point scaled to unit norm.
pub fn simplex_codebook(n: usize) -> Result<Codebook> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("simplex needs at least 2 symbols, got {n}")));
    }
    let centered = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64);
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let mut v = centered.column(k).into_owned();
        for b in &basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        let norm = v.norm();
        basis.push(v / norm);
    }
    let mut points = DMatrix::from_fn(n - 1, n, |i, j| basis[i].dot(&centered.column(j)));
    for mut col in points.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    Codebook::from_real(&points)
}

/// Sample coherence matrix with its singular values (canonical correlations).
#[derive(Debug, Clone)]
pub struct CoherenceMatrix {
    values: CMatrix,
    singular_values: Vec<f64>,
}

impl CoherenceMatrix {
    pub(crate) fn new(values: CMatrix) -> Self {
        let singular_values = singular_values(&values);
        debug_assert!(
            singular_values.first().is_none_or(|&s| s <= 1.0 + 1e-9),
            "coherence singular value above one: {singular_values:?}"
        );
        Self { values, singular_values }
    }

    pub fn values(&self) -> &CMatrix {
        &self.values
    }

    /// Non-increasing.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn frobenius_sq(&self) -> f64 {
        frobenius_sq(&self.values)
    }

    /// Largest singular value, 0 for an empty matrix.
    pub fn max_singular_value(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }
}

/// Discrete memoryless channel: `w[(m, n)] = Pr{Y = m | X = n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DmcSpec {
    w: DMatrix<f64>,
    input: MassFunction,
}

impl DmcSpec {
    pub fn new(w: DMatrix<f64>, input: MassFunction) -> Result<Self> {
        if w.ncols() != input.len() {
            return Err(Error::LengthMismatch { left: w.ncols(), right: input.len() });
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("channel has negative entries".into()));
        }
        for (n, col) in w.column_iter().enumerate() {
            let s: f64 = col.sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("channel column {n} sums to {s}")));
            }
        }
        Ok(Self { w, input })
    }

    pub fn channel(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn input(&self) -> &MassFunction {
        &self.input
    }

    /// `J[(n, m)] = W[(m, n)] p[n]`.
    pub fn joint(&self) -> JointMass {
        let p = self.input.values();
        let j = DMatrix::from_fn(self.w.ncols(), self.w.nrows(), |n, m| self.w[(m, n)] * p[n]);
        let total: f64 = j.sum();
        JointMass::new(j / total).expect("channel times input is a joint mass")
    }

    /// Output marginal `W p`.
    pub fn output(&self) -> Vec<f64> {
        (&self.w * nalgebra::DVector::from_column_slice(self.input.values())).iter().copied().collect()
    }
}

/// Relative frequencies `(p, q, J)`; `p` and `q` are the row and column sums
/// of `J`.
pub fn empirical_masses(s: &DiscretePairedSamples) -> (MassFunction, MassFunction, JointMass) {
    let mut counts = DMatrix::<f64>::zeros(s.x_alphabet, s.y_alphabet);
    for (&a, &b) in s.x.iter().zip(&s.y) {
        counts[(a, b)] += 1.0;
    }
    let j = JointMass::new(counts / s.len() as f64).expect("normalized counts form a joint mass");
    let (p, q) = j.marginals();
    (p, q, j)
}

fn seen(values: &[f64]) -> Vec<usize> {
    values.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(i, _)| i).collect()
}

struct Reduced {
    keep_x: Vec<usize>,
    keep_y: Vec<usize>,
    p: Vec<f64>,
    q: Vec<f64>,
    centered_joint: CMatrix,
    warnings: Vec<Warning>,
}

fn reduce(j: &JointMass) -> Reduced {
    let (p, q) = j.marginals();
    let keep_x = seen(p.values());
    let keep_y = seen(q.values());
    let mut warnings = Vec::new();
    if keep_x.len() < p.len() || keep_y.len() < q.len() {
        warnings.push(Warning::UnseenSymbols {
            x_missing: p.len() - keep_x.len(),
            y_missing: q.len() - keep_y.len(),
        });
    }
    let pr: Vec<f64> = keep_x.iter().map(|&i| p.values()[i]).collect();
    let qr: Vec<f64> = keep_y.iter().map(|&i| q.values()[i]).collect();
    let centered_joint = CMatrix::from_fn(keep_x.len(), keep_y.len(), |a, b| {
        C64::new(j.values()[(keep_x[a], keep_y[b])] - pr[a] * qr[b], 0.0)
    });
    Reduced { keep_x, keep_y, p: pr, q: qr, centered_joint, warnings }
}

fn check_codebooks(j: &JointMass, fx: &Codebook, fy: &Codebook) -> Result<()> {
    if fx.symbols() != j.rows() {
        return Err(Error::LengthMismatch { left: fx.symbols(), right: j.rows() });
    }
    if fy.symbols() != j.cols() {
        return Err(Error::LengthMismatch { left: fy.symbols(), right: j.cols() });
    }
    Ok(())
}

/// `F diag(p) F^H`, or `F (diag(p) - p p^T) F^H` when `centered`.
fn mapped_second_moment(f: &CMatrix, p: &[f64], centered: bool) -> CMatrix {
    let mut inner = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        p.len(),
        p.iter().map(|&v| C64::new(v, 0.0)),
    ));
    if centered {
        for a in 0..p.len() {
            for b in 0..p.len() {
                inner[(a, b)] -= C64::new(p[a] * p[b], 0.0);
            }
        }
    }
    f * inner * f.adjoint()
}

fn coherence_with(j: &JointMass, fx: &Codebook, fy: &Codebook, centered: bool) -> Result<(CoherenceMatrix, Reduced)> {
    check_codebooks(j, fx, fy)?;
    let red = reduce(j);
    let f = fx.select_columns(&red.keep_x);
    let g = fy.select_columns(&red.keep_y);
    let rx = mapped_second_moment(&f, &red.p, centered);
    let ry = mapped_second_moment(&g, &red.q, centered);
    let cxy = &f * &red.centered_joint * g.adjoint();
    let c = Whitener::coherence(&Whitener::new(&rx), &cxy, &Whitener::new(&ry));
    Ok((CoherenceMatrix::new(c), red))
}

/// Autocorrelation-form coherence `R_x^{-1/2} C_xy R_y^{-1/2}` of a joint
/// mass mapped through the given codebooks.
pub fn coherence_autocorr(j: &JointMass, fx: &Codebook, fy: &Codebook) -> Result<CoherenceMatrix> {
    Ok(coherence_with(j, fx, fy, false)?.0)
}

/// Covariance-form coherence `C_x^{-1/2} C_xy C_y^{-1/2}`.
pub fn coherence_covariance(j: &JointMass, fx: &Codebook, fy: &Codebook) -> Result<CoherenceMatrix> {
    Ok(coherence_with(j, fx, fy, true)?.0)
}

/// Plug-in SMI through the autocorrelation form.
pub fn smi_plugin_autocorr(s: &DiscretePairedSamples, fx: &Codebook, fy: &Codebook) -> Result<Estimate> {
    let (_, _, j) = empirical_masses(s);
    let (c, red) = coherence_with(&j, fx, fy, false)?;
    Ok(Estimate { value: c.frobenius_sq(), warnings: red.warnings })
}

/// Plug-in SMI through the covariance form with arbitrary codebooks. Equals
/// the full plug-in value for `(N-1)`-dimensional simplex codebooks and is a
/// lower bound for lower-dimensional ones.
pub fn smi_plugin_covariance(s: &DiscretePairedSamples, fx: &Codebook, fy: &Codebook) -> Result<Estimate> {
    let (_, _, j) = empirical_masses(s);
    let (c, red) = coherence_with(&j, fx, fy, true)?;
    Ok(Estimate { value: c.frobenius_sq(), warnings: red.warnings })
}

/// Simplex codebooks sized to the observed alphabets; `None` when either
/// side shows a single symbol (no variation, empty coherence).
fn observed_simplex(j: &JointMass) -> Result<Option<(JointMass, Codebook, Codebook, Vec<Warning>)>> {
    let red = reduce(j);
    if red.keep_x.len() < 2 || red.keep_y.len() < 2 {
        return Ok(None);
    }
    let sub = JointMass::new(DMatrix::from_fn(red.keep_x.len(), red.keep_y.len(), |a, b| {
        j.values()[(red.keep_x[a], red.keep_y[b])]
    }))?;
    Ok(Some((sub, simplex_codebook(red.keep_x.len())?, simplex_codebook(red.keep_y.len())?, red.warnings)))
}

/// Simplex-codebook coherence of a joint mass (covariance form).
pub fn coherence_simplex(j: &JointMass) -> Result<CoherenceMatrix> {
    match observed_simplex(j)? {
        Some((sub, fx, fy, _)) => coherence_covariance(&sub, &fx, &fy),
        None => Ok(CoherenceMatrix::new(CMatrix::zeros(0, 0))),
    }
}

/// Plug-in SMI via simplex codebooks and sample covariances: the sum of the
/// squared canonical correlations.
pub fn smi_plugin_simplex(s: &DiscretePairedSamples) -> Result<Estimate> {
    let (_, _, j) = empirical_masses(s);
    let warnings = reduce(&j).warnings;
    Ok(Estimate { value: coherence_simplex(&j)?.frobenius_sq(), warnings })
}

/// Empirical HGR maximal correlation: the largest canonical correlation.
pub fn hgr_plugin(s: &DiscretePairedSamples) -> Result<Estimate> {
    let (_, _, j) = empirical_masses(s);
    let warnings = reduce(&j).warnings;
    Ok(Estimate { value: coherence_simplex(&j)?.max_singular_value(), warnings })
}

/// Canonical correlations of a joint mass under the given codebooks, i.e.
/// the `min(N, M) - 1` leading singular values of the autocorrelation-form
/// coherence over the observed symbols.
pub fn canonical_correlations_of(j: &JointMass, fx: &Codebook, fy: &Codebook) -> Result<Vec<f64>> {
    let (c, red) = coherence_with(j, fx, fy, false)?;
    let count = red.keep_x.len().min(red.keep_y.len()).saturating_sub(1);
    Ok(c.singular_values().iter().take(count).copied().collect())
}

/// Canonical correlations of the empirical joint of a stream.
pub fn canonical_correlations(s: &DiscretePairedSamples, fx: &Codebook, fy: &Codebook) -> Result<Vec<f64>> {
    canonical_correlations_of(&empirical_masses(s).2, fx, fy)
}

/// Divergence transition matrix `diag(Wp)^{-1/2} W diag(p)^{1/2}`.
pub fn dtm(spec: &DmcSpec) -> Result<DMatrix<f64>> {
    let q = spec.output();
    if let Some(index) = q.iter().position(|&v| v <= 0.0) {
        return Err(Error::ZeroMarginal { axis: "output", index });
    }
    let p = spec.input().values();
    if let Some(index) = p.iter().position(|&v| v <= 0.0) {
        return Err(Error::ZeroMarginal { axis: "input", index });
    }
    let w = spec.channel();
    Ok(DMatrix::from_fn(w.nrows(), w.ncols(), |m, n| w[(m, n)] * p[n].sqrt() / q[m].sqrt()))
}

/// Singular values of the divergence transition matrix.
pub fn dtm_singular_values(spec: &DmcSpec) -> Result<Vec<f64>> {
    Ok(real_singular_values(&dtm(spec)?))
}
