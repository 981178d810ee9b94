//! Closed-form information quantities on known mass functions.
//!
//! Everything here is exact (no sampling): the information potential and the
//! second-order Rényi/Tsallis entropies, the Pearson chi-squared and
//! second-order Rényi divergences, and the squared-loss mutual information
//! (SMI) of a joint mass matrix through its coherence matrix
//! `diag(p)^{-1/2} (J - p q^T) diag(q)^{-1/2}`.
//!
//! Shannon entropy, KL divergence and Shannon MI are provided as reference
//! helpers with the convention `0 ln 0 = 0`. Infinite divergences are typed
//! errors ([`Error::SupportMismatch`]).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;

const SUM_TOLERANCE: f64 = 1e-12;

/// A probability vector: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MassFunction(Vec<f64>);

impl MassFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidMass("empty mass function".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidMass(format!("entry {i} is {}", values[i])));
        }
        let total = pairwise_sum(&values);
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidMass(format!("entries sum to {total}")));
        }
        Ok(Self(values))
    }

    /// Normalizes non-negative weights (counts, Dirichlet draws) to a mass.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total = pairwise_sum(weights);
        if !(total > 0.0) {
            return Err(Error::InvalidMass("weights have no positive mass".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMass("empty alphabet".into()));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn point(n: usize, at: usize) -> Result<Self> {
        if at >= n {
            return Err(Error::SymbolOutOfRange { symbol: at, alphabet: n });
        }
        let mut v = vec![0.0; n];
        v[at] = 1.0;
        Ok(Self(v))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Joint probability matrix `J[n][m] = Pr{X = n, Y = m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMass(DMatrix<f64>);

impl JointMass {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidMass("empty joint mass".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidMass(format!("joint entry {v}")));
        }
        let total = pairwise_sum(values.as_slice());
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidMass(format!("joint entries sum to {total}")));
        }
        Ok(Self(values))
    }

    /// The independent joint `p q^T`.
    pub fn product(p: &MassFunction, q: &MassFunction) -> Self {
        Self(DMatrix::from_fn(p.len(), q.len(), |i, j| p.0[i] * q.0[j]))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    /// Row sums (marginal of X).
    pub fn row_marginal(&self) -> MassFunction {
        MassFunction(self.0.row_iter().map(|r| r.sum()).collect())
    }

    /// Column sums (marginal of Y).
    pub fn col_marginal(&self) -> MassFunction {
        MassFunction(self.0.column_iter().map(|c| c.sum()).collect())
    }

    pub fn marginals(&self) -> (MassFunction, MassFunction) {
        (self.row_marginal(), self.col_marginal())
    }
}

/// A mass function moved by `scale * direction`, with a zero-sum direction.
#[derive(Debug, Clone)]
pub struct PerturbedPair {
    base: MassFunction,
    direction: Vec<f64>,
    scale: f64,
}

impl PerturbedPair {
    pub fn new(base: MassFunction, direction: Vec<f64>, scale: f64) -> Result<Self> {
        if direction.len() != base.len() {
            return Err(Error::LengthMismatch { left: base.len(), right: direction.len() });
        }
        let total = pairwise_sum(&direction);
        if total.abs() > SUM_TOLERANCE {
            return Err(Error::InvalidParameter(format!("perturbation sums to {total}, not 0")));
        }
        if base.0.iter().zip(&direction).any(|(p, d)| p + scale * d < 0.0) {
            return Err(Error::InvalidParameter("perturbed mass has negative entries".into()));
        }
        Ok(Self { base, direction, scale })
    }

    pub fn base(&self) -> &MassFunction {
        &self.base
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `base + scale * direction`.
    pub fn perturbed(&self) -> MassFunction {
        MassFunction(self.base.0.iter().zip(&self.direction).map(|(p, d)| p + self.scale * d).collect())
    }
}

/// `V2(p) = sum p_i^2`, the collision probability.
pub fn information_potential(p: &MassFunction) -> f64 {
    let sq: Vec<f64> = p.0.iter().map(|v| v * v).collect();
    pairwise_sum(&sq)
}

/// `H2(p) = -ln V2(p)`.
pub fn renyi2_entropy(p: &MassFunction) -> f64 {
    -information_potential(p).ln()
}

/// `S2(p) = 1 - V2(p)`.
pub fn tsallis2_entropy(p: &MassFunction) -> f64 {
    1.0 - information_potential(p)
}

/// Shannon entropy in nats.
pub fn shannon_entropy(p: &MassFunction) -> f64 {
    let terms: Vec<f64> = p.0.iter().map(|&v| if v > 0.0 { -v * v.ln() } else { 0.0 }).collect();
    pairwise_sum(&terms)
}

fn check_pair(p: &MassFunction, q: &MassFunction) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { left: p.len(), right: q.len() });
    }
    if let Some(index) = p.0.iter().zip(&q.0).position(|(&pi, &qi)| pi > 0.0 && qi <= 0.0) {
        return Err(Error::SupportMismatch { index, p: p.0[index] });
    }
    Ok(())
}

/// Pearson divergence `sum p_i^2 / q_i - 1`, evaluated as
/// `sum (p_i - q_i)^2 / q_i` which is algebraically identical and never
/// rounds below zero.
pub fn chi2_divergence(p: &MassFunction, q: &MassFunction) -> Result<f64> {
    check_pair(p, q)?;
    let terms: Vec<f64> = p
        .0
        .iter()
        .zip(&q.0)
        .map(|(&pi, &qi)| if qi > 0.0 { (pi - qi) * (pi - qi) / qi } else { 0.0 })
        .collect();
    Ok(pairwise_sum(&terms))
}

/// The three algebraic forms of the chi-squared divergence:
/// `E_p[p/q] - 1`, `E_p[((p - q)/sqrt(p q))^2]` and `||(p - q)/sqrt(q)||^2`.
///
/// They agree whenever `p` and `q` share their support.
pub fn chi2_divergence_forms(p: &MassFunction, q: &MassFunction) -> Result<[f64; 3]> {
    check_pair(p, q)?;
    let mut ratio = Vec::with_capacity(p.len());
    let mut weighted = Vec::with_capacity(p.len());
    let mut euclid = Vec::with_capacity(p.len());
    for (&pi, &qi) in p.0.iter().zip(&q.0) {
        if pi > 0.0 {
            ratio.push(pi * pi / qi);
            let z = (pi - qi) / (pi * qi).sqrt();
            weighted.push(pi * z * z);
        }
        if qi > 0.0 {
            euclid.push((pi - qi) * (pi - qi) / qi);
        }
    }
    Ok([pairwise_sum(&ratio) - 1.0, pairwise_sum(&weighted), pairwise_sum(&euclid)])
}

/// `D2(p||q) = ln(1 + chi2(p||q))`.
pub fn renyi2_divergence(p: &MassFunction, q: &MassFunction) -> Result<f64> {
    Ok(chi2_divergence(p, q)?.ln_1p())
}

/// Kullback-Leibler divergence in nats.
pub fn kl_divergence(p: &MassFunction, q: &MassFunction) -> Result<f64> {
    check_pair(p, q)?;
    let terms: Vec<f64> = p
        .0
        .iter()
        .zip(&q.0)
        .map(|(&pi, &qi)| if pi > 0.0 { pi * (pi / qi).ln() } else { 0.0 })
        .collect();
    Ok(pairwise_sum(&terms))
}

fn positive_marginals(j: &JointMass) -> Result<(MassFunction, MassFunction)> {
    let (p, q) = j.marginals();
    if let Some(index) = p.0.iter().position(|&v| v <= 0.0) {
        return Err(Error::ZeroMarginal { axis: "row", index });
    }
    if let Some(index) = q.0.iter().position(|&v| v <= 0.0) {
        return Err(Error::ZeroMarginal { axis: "column", index });
    }
    Ok((p, q))
}

/// Coherence matrix `diag(p)^{-1/2} (J - p q^T) diag(q)^{-1/2}`.
pub fn coherence_matrix(j: &JointMass) -> Result<DMatrix<f64>> {
    let (p, q) = positive_marginals(j)?;
    Ok(DMatrix::from_fn(j.rows(), j.cols(), |n, m| {
        (j.0[(n, m)] - p.0[n] * q.0[m]) / (p.0[n] * q.0[m]).sqrt()
    }))
}

/// Squared-loss mutual information: squared Frobenius norm of the coherence
/// matrix.
pub fn smi_exact(j: &JointMass) -> Result<f64> {
    let c = coherence_matrix(j)?;
    let sq: Vec<f64> = c.iter().map(|v| v * v).collect();
    Ok(pairwise_sum(&sq))
}

/// Shannon mutual information `KL(J || p q^T)` in nats.
pub fn mutual_information(j: &JointMass) -> Result<f64> {
    let (p, q) = positive_marginals(j)?;
    let mut terms = Vec::with_capacity(j.rows() * j.cols());
    for n in 0..j.rows() {
        for m in 0..j.cols() {
            let v = j.0[(n, m)];
            if v > 0.0 {
                terms.push(v * (v / (p.0[n] * q.0[m])).ln());
            }
        }
    }
    Ok(pairwise_sum(&terms))
}

/// Second-order Rényi MI from SMI: `ln(1 + smi)`.
pub fn i2_from_smi(smi: f64) -> Result<f64> {
    if !(smi >= 0.0) {
        return Err(Error::InvalidParameter(format!("SMI must be non-negative, got {smi}")));
    }
    Ok(smi.ln_1p())
}

/// `||J - p q^T||^2`, the unweighted quadratic dependence measure.
pub fn xi_quadratic(j: &JointMass) -> f64 {
    let (p, q) = j.marginals();
    let mut sq = Vec::with_capacity(j.rows() * j.cols());
    for n in 0..j.rows() {
        for m in 0..j.cols() {
            let d = j.0[(n, m)] - p.0[n] * q.0[m];
            sq.push(d * d);
        }
    }
    pairwise_sum(&sq)
}

/// Shannon MI and SMI of a bivariate normal with correlation `rho`:
/// `(-ln(1 - rho^2) / 2, rho^2 / (1 - rho^2))`.
pub fn gaussian_closed_forms(rho: f64) -> Result<(f64, f64)> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("|rho| must be < 1, got {rho}")));
    }
    let r2 = rho * rho;
    Ok((-0.5 * (-r2).ln_1p(), r2 / (1.0 - r2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mass(v: &[f64]) -> MassFunction {
        MassFunction::new(v.to_vec()).unwrap()
    }

    fn direct_sum_sq(v: &[f64]) -> f64 {
        let mut s = 0.0;
        for x in v {
            s += x * x;
        }
        s
    }

    #[test]
    fn information_potential_examples() {
        assert_eq!(information_potential(&MassFunction::uniform(4).unwrap()), 0.25);
        assert_eq!(information_potential(&MassFunction::point(3, 1).unwrap()), 1.0);
        let p = [0.5, 0.25, 0.25];
        assert!((information_potential(&mass(&p)) - direct_sum_sq(&p)).abs() < 1e-15);
        assert!((information_potential(&mass(&p)) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn entropy_examples() {
        for n in [2usize, 5, 17] {
            let u = MassFunction::uniform(n).unwrap();
            assert!((renyi2_entropy(&u) - (n as f64).ln()).abs() < 1e-12);
            assert!((shannon_entropy(&u) - renyi2_entropy(&u)).abs() < 1e-12);
        }
        let pt = MassFunction::point(4, 2).unwrap();
        assert_eq!(renyi2_entropy(&pt), 0.0);
        assert_eq!(tsallis2_entropy(&pt), 0.0);
        assert_eq!(tsallis2_entropy(&mass(&[0.5, 0.5])), 0.5);
    }

    #[test]
    fn chi2_examples() {
        let p = mass(&[0.5, 0.5]);
        assert_eq!(chi2_divergence(&p, &p).unwrap(), 0.0);
        let q = mass(&[0.25, 0.75]);
        // 0.25/0.25 + 0.25/0.75 - 1
        let oracle = 0.5 * 0.5 / 0.25 + 0.5 * 0.5 / 0.75 - 1.0;
        assert!((chi2_divergence(&p, &q).unwrap() - oracle).abs() < 1e-15);
        assert!((oracle - 1.0 / 3.0).abs() < 1e-15);
        assert!((renyi2_divergence(&p, &q).unwrap() - (4.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!(((4.0f64 / 3.0).ln() - 0.28768).abs() < 1e-5);
    }

    #[test]
    fn chi2_support_mismatch_is_an_error() {
        let p = mass(&[0.5, 0.5]);
        let q = mass(&[1.0, 0.0]);
        assert_eq!(chi2_divergence(&p, &q), Err(Error::SupportMismatch { index: 1, p: 0.5 }));
        assert!(renyi2_divergence(&p, &q).is_err());
        // KL is finite in the other direction
        assert!(kl_divergence(&q, &p).unwrap().is_finite());
    }

    #[test]
    fn gaussian_variance_blowup_signals_infinite_divergence() {
        // Discretized N(0, vp) against N(0, vq) on a widening grid: the chi2
        // partial sums keep growing when vp > 2 vq and settle when vp < 2 vq.
        let discretized = |var: f64, half_width: f64| {
            let h = 0.05;
            let n = (2.0 * half_width / h) as usize + 1;
            let w: Vec<f64> = (0..n)
                .map(|i| {
                    let x = -half_width + i as f64 * h;
                    (-x * x / (2.0 * var)).exp()
                })
                .collect();
            MassFunction::from_weights(&w).unwrap()
        };
        let growth = |vp: f64, vq: f64| {
            let a = chi2_divergence(&discretized(vp, 10.0), &discretized(vq, 10.0)).unwrap();
            let b = chi2_divergence(&discretized(vp, 20.0), &discretized(vq, 20.0)).unwrap();
            b / a
        };
        assert!(growth(2.5, 1.0) > 10.0);
        assert!((growth(1.5, 1.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn smi_examples() {
        let p = mass(&[0.2, 0.3, 0.5]);
        let q = mass(&[0.6, 0.4]);
        assert!(smi_exact(&JointMass::product(&p, &q)).unwrap().abs() < 1e-15);
        let diag = JointMass::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5])).unwrap();
        // coherence = [[0.5, -0.5], [-0.5, 0.5]]
        assert!((smi_exact(&diag).unwrap() - 1.0).abs() < 1e-15);
        assert!((xi_quadratic(&diag) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn smi_zero_marginal_is_an_error() {
        let j = JointMass::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 0.0])).unwrap();
        assert_eq!(smi_exact(&j), Err(Error::ZeroMarginal { axis: "row", index: 1 }));
    }

    #[test]
    fn xi_differs_from_smi_for_non_uniform_marginals() {
        let j = JointMass::new(DMatrix::from_row_slice(2, 2, &[0.6, 0.1, 0.1, 0.2])).unwrap();
        assert!((xi_quadratic(&j) - smi_exact(&j).unwrap()).abs() > 1e-3);
    }

    #[test]
    fn i2_examples() {
        assert_eq!(i2_from_smi(0.0).unwrap(), 0.0);
        assert!((i2_from_smi(1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(i2_from_smi(-0.1).is_err());
        for s in [0.01, 0.5, 3.0, 100.0] {
            assert!(i2_from_smi(s).unwrap() <= s);
        }
    }

    #[test]
    fn gaussian_examples() {
        assert_eq!(gaussian_closed_forms(0.0).unwrap(), (0.0, 0.0));
        let (mi, smi) = gaussian_closed_forms(0.5).unwrap();
        assert!((mi - 0.143841).abs() < 1e-6);
        assert!((smi - 1.0 / 3.0).abs() < 1e-12);
        let (mi, smi) = gaussian_closed_forms(0.1).unwrap();
        // closed-form ratio: 0.5 * (0.01/0.99) / (-0.5 ln 0.99)
        let oracle = (0.01 / 0.99) / -(0.99f64.ln());
        assert!((0.5 * smi / mi - oracle).abs() < 1e-12);
        assert!((0.5 * smi / mi - 1.005042).abs() < 1e-6);
        assert!(gaussian_closed_forms(1.0).is_err());
        assert!(gaussian_closed_forms(-1.2).is_err());
    }

    #[test]
    fn invalid_masses_rejected() {
        assert!(MassFunction::new(vec![]).is_err());
        assert!(MassFunction::new(vec![0.5, 0.6]).is_err());
        assert!(MassFunction::new(vec![1.5, -0.5]).is_err());
        assert!(PerturbedPair::new(mass(&[0.5, 0.5]), vec![1.0, 0.0], 0.1).is_err());
        assert!(PerturbedPair::new(mass(&[0.5, 0.5]), vec![1.0, -1.0], 0.6).is_err());
        let pp = PerturbedPair::new(mass(&[0.5, 0.5]), vec![1.0, -1.0], 0.1).unwrap();
        assert_eq!(pp.perturbed().values(), &[0.6, 0.4]);
    }
}
