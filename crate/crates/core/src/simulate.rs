//! Synthetic sources and genie-aided reference values.
//!
//! The benchmark family is a mixture of zero-mean bivariate normals with
//! unit marginals. The default two-component member
//! `0.5 N(0, [[1, r], [r, 1]]) + 0.5 N(0, [[1, -r], [-r, 1]])` has standard
//! normal marginals and `E[xy] = 0` for every `r`, so all of its dependence
//! is nonlinear. Its SMI has the closed form `r^4 / (1 - r^4)`; with
//! independent Gaussian noise of variance `sigma2` on both sources the same
//! formula holds for `r / (1 + sigma2)`.
//!
//! Genie values are Monte-Carlo averages over draws from the true law with
//! the density ratio evaluated exactly: `SMI = E[p/(p_x p_y)] - 1` and
//! `MI = E[ln p/(p_x p_y)]`. All randomness derives from a 64-bit seed and a
//! stream index of a ChaCha generator, so every trial owns an independent,
//! reproducible substream.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::analog::RealPairedSamples;
use crate::discrete::{DiscretePairedSamples, DmcSpec};
use crate::error::{Error, Result};
use crate::measures::{JointMass, MassFunction};

const GENIE_CHUNK: usize = 1 << 14;
const GENIE_STREAM_BASE: u64 = 1 << 40;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Generator for `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One zero-mean, unit-variance bivariate normal component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmComponent {
    pub weight: f64,
    pub rho: f64,
}

/// Mixture of zero-mean bivariate normals with unit marginal variances.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec {
    components: Vec<GmmComponent>,
}

impl GmmSpec {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        if let Some(c) = components.iter().find(|c| !(c.weight >= 0.0) || !(c.rho.abs() < 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "component needs weight >= 0 and |rho| < 1, got weight={} rho={}",
                c.weight, c.rho
            )));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMass(format!("mixture weights sum to {total}")));
        }
        Ok(Self { components })
    }

    /// The uncorrelated two-component family with dependence parameter `r`.
    pub fn x_shaped(r: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::InvalidParameter(format!("r must lie in [0, 1), got {r}")));
        }
        Self::new(vec![GmmComponent { weight: 0.5, rho: r }, GmmComponent { weight: 0.5, rho: -r }])
    }

    /// Member of the two-component family whose SMI equals `smi`.
    pub fn x_shaped_with_smi(smi: f64) -> Result<Self> {
        if !(smi >= 0.0 && smi.is_finite()) {
            return Err(Error::InvalidParameter(format!("target SMI must be finite and >= 0, got {smi}")));
        }
        Self::x_shaped((smi / (1.0 + smi)).powf(0.25))
    }

    pub fn bivariate_normal(rho: f64) -> Result<Self> {
        Self::new(vec![GmmComponent { weight: 1.0, rho }])
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    /// `E[xy]`, unchanged by independent additive noise.
    pub fn cross_moment(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.rho).sum()
    }

    /// Exact SMI after adding independent `N(0, sigma2)` noise to both sources:
    /// `sum_ij w_i w_j a_i a_j / (1 - a_i a_j)` with `a_i = rho_i / (1 + sigma2)`.
    pub fn smi_closed_form(&self, sigma2: f64) -> f64 {
        let a: Vec<(f64, f64)> = self.components.iter().map(|c| (c.weight, c.rho / (1.0 + sigma2))).collect();
        let mut s = 0.0;
        for &(wi, ai) in &a {
            for &(wj, aj) in &a {
                s += wi * wj * ai * aj / (1.0 - ai * aj);
            }
        }
        s
    }

    /// Exact MI, available for a single component only.
    pub fn mi_closed_form(&self, sigma2: f64) -> Option<f64> {
        match self.components.as_slice() {
            [c] => {
                let a = c.rho / (1.0 + sigma2);
                Some(-0.5 * (-a * a).ln_1p())
            }
            _ => None,
        }
    }

    /// `ln p(x, y) - ln p(x) - ln p(y)` for the noise-contaminated law.
    pub fn log_density_ratio(&self, x: f64, y: f64, sigma2: f64) -> f64 {
        let v = 1.0 + sigma2;
        let marg = -LN_2PI - v.ln() - (x * x + y * y) / (2.0 * v);
        let terms: Vec<f64> = self
            .components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| {
                let det = v * v - c.rho * c.rho;
                let quad = (v * x * x - 2.0 * c.rho * x * y + v * y * y) / det;
                c.weight.ln() - LN_2PI - 0.5 * det.ln() - 0.5 * quad
            })
            .collect();
        log_sum_exp(&terms) - marg
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut rho = self.components[self.components.len() - 1].rho;
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                rho = c.rho;
                break;
            }
        }
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        (z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// `L` i.i.d. draws from substream `stream` of `seed`.
pub fn gmm_sample_stream(spec: &GmmSpec, samples: usize, seed: u64, stream: u64) -> RealPairedSamples {
    let mut rng = substream(seed, stream);
    let (x, y) = (0..samples).map(|_| spec.draw(&mut rng)).unzip();
    RealPairedSamples::new(x, y).expect("gaussian draws are finite")
}

/// `L` i.i.d. draws; deterministic given `seed`.
pub fn gmm_sample(spec: &GmmSpec, samples: usize, seed: u64) -> RealPairedSamples {
    gmm_sample_stream(spec, samples, seed, 0)
}

/// Adds independent `N(0, sigma2)` noise to both sources.
pub fn contaminate(s: &RealPairedSamples, sigma2: f64, seed: u64, stream: u64) -> RealPairedSamples {
    let mut rng = substream(seed, stream);
    let sd = sigma2.max(0.0).sqrt();
    let mut noisy = |v: &f64| v + sd * rng.sample::<f64, _>(StandardNormal);
    let x: Vec<f64> = s.x().iter().map(&mut noisy).collect();
    let y: Vec<f64> = s.y().iter().map(&mut noisy).collect();
    RealPairedSamples::new(x, y).expect("gaussian draws are finite")
}

/// Monte-Carlo settings for genie evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenieConfig {
    pub mc_samples: usize,
    pub seed: u64,
    /// Variance of the independent noise added to both sources.
    pub sigma2: f64,
}

impl GenieConfig {
    pub fn new(mc_samples: usize, seed: u64, sigma2: f64) -> Result<Self> {
        if mc_samples < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: mc_samples });
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("contamination variance must be >= 0, got {sigma2}")));
        }
        Ok(Self { mc_samples, seed, sigma2 })
    }
}

/// A Monte-Carlo value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenieEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl GenieEstimate {
    /// `|value - target| <= k * std_error`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

/// SMI, MI and the ratio `SMI / (2 MI)` from one set of draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenieRun {
    pub smi: GenieEstimate,
    pub mi: GenieEstimate,
    pub half_ratio: GenieEstimate,
}

const CONTROLS: usize = 4;
const DIM: usize = 2 + CONTROLS;

/// Running sums of `f1 = ratio - 1`, `f2 = ln ratio` and the control
/// variates `xy, x^2, y^2, x^2 y^2`.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    s: [f64; DIM],
    ss: [[f64; DIM]; DIM],
}

impl Moments {
    fn push(&mut self, v: [f64; DIM]) {
        self.n += 1.0;
        for i in 0..DIM {
            self.s[i] += v[i];
            for j in 0..DIM {
                self.ss[i][j] += v[i] * v[j];
            }
        }
    }

    fn push_point(&mut self, lr: f64, x: f64, y: f64) {
        let (x2, y2) = (x * x, y * y);
        self.push([lr.exp_m1(), lr, x * y, x2, y2, x2 * y2]);
    }

    fn merge(mut self, o: &Moments) -> Self {
        self.n += o.n;
        for i in 0..DIM {
            self.s[i] += o.s[i];
            for j in 0..DIM {
                self.ss[i][j] += o.ss[i][j];
            }
        }
        self
    }

    fn mean(&self, i: usize) -> f64 {
        self.s[i] / self.n
    }

    fn cov(&self, i: usize, j: usize) -> f64 {
        (self.ss[i][j] - self.s[i] * self.s[j] / self.n) / (self.n - 1.0)
    }

    /// Regression-adjusted estimates given the exact control means; `None`
    /// gives plain sample means.
    fn finish(&self, control_means: Option<[f64; CONTROLS]>) -> GenieRun {
        let n = self.n;
        let sgg = DMatrix::from_fn(CONTROLS, CONTROLS, |i, j| self.cov(2 + i, 2 + j));
        let sgf = DMatrix::from_fn(CONTROLS, 2, |i, j| self.cov(2 + i, j));
        let solved = control_means.and_then(|mu| sgg.clone().cholesky().map(|c| (mu, c.solve(&sgf))));
        let mut mean = [self.mean(0), self.mean(1)];
        let mut cov = [[self.cov(0, 0), self.cov(0, 1)], [self.cov(1, 0), self.cov(1, 1)]];
        if let Some((mu, beta)) = solved {
            for f in 0..2 {
                mean[f] -= (0..CONTROLS).map(|k| beta[(k, f)] * (self.mean(2 + k) - mu[k])).sum::<f64>();
            }
            let explained = sgf.transpose() * &beta;
            for a in 0..2 {
                for b in 0..2 {
                    cov[a][b] -= explained[(a, b)];
                }
            }
        }
        let samples = n as usize;
        // when the controls explain the integrand exactly, only rounding is left
        let est = |value: f64, var: f64| GenieEstimate {
            value,
            std_error: (var.max(0.0) / n).sqrt().max(1e-12 * value.abs()),
            samples,
        };
        let (a, b) = (mean[0], mean[1]);
        let c = a / b;
        let vr = (0.5 / b).powi(2) * (cov[0][0] + c * c * cov[1][1] - 2.0 * c * cov[0][1]);
        GenieRun { smi: est(a, cov[0][0]), mi: est(b, cov[1][1]), half_ratio: est(0.5 * c, vr) }
    }
}

fn run_chunks<F>(total: usize, seed: u64, control_means: Option<[f64; CONTROLS]>, chunk: F) -> GenieRun
where
    F: Fn(&mut ChaCha8Rng, usize, &mut Moments) + Sync,
{
    let chunks = total.div_ceil(GENIE_CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, GENIE_STREAM_BASE + c as u64);
            let len = GENIE_CHUNK.min(total - c * GENIE_CHUNK);
            let mut m = Moments::default();
            chunk(&mut rng, len, &mut m);
            m
        })
        .collect();
    parts.iter().fold(Moments::default(), |acc, m| acc.merge(m)).finish(control_means)
}

impl GmmSpec {
    /// Exact `E[xy], E[x^2], E[y^2], E[x^2 y^2]` under the contaminated law.
    fn control_means(&self, sigma2: f64) -> [f64; CONTROLS] {
        let v = 1.0 + sigma2;
        let m4: f64 = self.components.iter().map(|c| c.weight * (v * v + 2.0 * c.rho * c.rho)).sum();
        [self.cross_moment(), v, v, m4]
    }
}

/// Genie SMI, MI and their ratio for a (possibly contaminated) mixture.
/// Low-order moments with known expectations serve as control variates.
pub fn genie(spec: &GmmSpec, cfg: &GenieConfig) -> GenieRun {
    let sd = cfg.sigma2.sqrt();
    run_chunks(cfg.mc_samples, cfg.seed, Some(spec.control_means(cfg.sigma2)), |rng, len, m| {
        for _ in 0..len {
            let (x0, y0) = spec.draw(rng);
            let x = x0 + sd * rng.sample::<f64, _>(StandardNormal);
            let y = y0 + sd * rng.sample::<f64, _>(StandardNormal);
            m.push_point(spec.log_density_ratio(x, y, cfg.sigma2), x, y);
        }
    })
}

pub fn genie_smi(spec: &GmmSpec, cfg: &GenieConfig) -> GenieEstimate {
    genie(spec, cfg).smi
}

pub fn genie_mi(spec: &GmmSpec, cfg: &GenieConfig) -> GenieEstimate {
    genie(spec, cfg).mi
}

/// Genie averages over supplied draws (for instance explicitly noise-added
/// data), with the density ratio of the law contaminated by `sigma2`.
pub fn genie_on_samples(spec: &GmmSpec, sigma2: f64, s: &RealPairedSamples) -> GenieRun {
    let mut m = Moments::default();
    for (&x, &y) in s.x().iter().zip(s.y()) {
        m.push_point(spec.log_density_ratio(x, y, sigma2), x, y);
    }
    m.finish(Some(spec.control_means(sigma2)))
}

/// Uniform draw from the probability simplex of dimension `n`.
fn flat_dirichlet<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn renormalized(mut v: Vec<f64>) -> Vec<f64> {
    // one more pass so the sum is exact to rounding
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|a| *a /= s);
    v
}

/// Random channel with `inputs` input and `outputs` output symbols; the
/// columns of `W` and the input mass are drawn uniformly on their simplices.
pub fn random_dmc_stream(inputs: usize, outputs: usize, seed: u64, stream: u64) -> Result<DmcSpec> {
    if inputs < 2 || outputs < 2 {
        return Err(Error::InvalidParameter(format!("channel needs >= 2 symbols per side, got {inputs}x{outputs}")));
    }
    let mut rng = substream(seed, stream);
    let mut w = DMatrix::zeros(outputs, inputs);
    for n in 0..inputs {
        let col = renormalized(flat_dirichlet(&mut rng, outputs));
        w.column_mut(n).copy_from_slice(&col);
    }
    let input = MassFunction::new(renormalized(flat_dirichlet(&mut rng, inputs)))?;
    DmcSpec::new(w, input)
}

pub fn random_dmc(inputs: usize, outputs: usize, seed: u64) -> Result<DmcSpec> {
    random_dmc_stream(inputs, outputs, seed, 0)
}

struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    fn new(weights: impl Iterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let u = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
    }
}

/// `L` i.i.d. symbol pairs from a joint mass (row index is `x`).
pub fn sample_joint(j: &JointMass, samples: usize, seed: u64, stream: u64) -> DiscretePairedSamples {
    let cols = j.cols();
    let table = Categorical::new((0..j.rows() * cols).map(|k| j.values()[(k / cols, k % cols)]));
    let mut rng = substream(seed, stream);
    let (x, y) = (0..samples)
        .map(|_| {
            let k = table.draw(&mut rng);
            (k / cols, k % cols)
        })
        .unzip();
    DiscretePairedSamples::new(x, y, j.rows(), cols).expect("draws lie in the alphabet")
}

/// Genie SMI and MI for a finite joint mass by sampling from it.
pub fn genie_joint(j: &JointMass, cfg: &GenieConfig) -> GenieRun {
    let (p, q) = j.marginals();
    let cols = j.cols();
    let log_ratio: Vec<f64> = (0..j.rows() * cols)
        .map(|k| {
            let (n, m) = (k / cols, k % cols);
            let v = j.values()[(n, m)];
            if v > 0.0 {
                (v / (p.values()[n] * q.values()[m])).ln()
            } else {
                0.0
            }
        })
        .collect();
    let table = Categorical::new((0..j.rows() * cols).map(|k| j.values()[(k / cols, k % cols)]));
    run_chunks(cfg.mc_samples, cfg.seed, None, |rng, len, m| {
        for _ in 0..len {
            let lr = log_ratio[table.draw(rng)];
            m.push([lr.exp_m1(), lr, 0.0, 0.0, 0.0, 0.0]);
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{mutual_information, smi_exact};

    #[test]
    fn closed_form_family_values() {
        let g = GmmSpec::x_shaped(0.5).unwrap();
        assert!((g.smi_closed_form(0.0) - 0.0625 / 0.9375).abs() < 1e-15);
        let g = GmmSpec::x_shaped_with_smi(1.0).unwrap();
        assert!((g.smi_closed_form(0.0) - 1.0).abs() < 1e-12);
        assert!((g.components()[0].rho - 0.5f64.powf(0.25)).abs() < 1e-15);
        assert_eq!(GmmSpec::x_shaped(0.7).unwrap().cross_moment(), 0.0);
        let b = GmmSpec::bivariate_normal(0.5).unwrap();
        assert!((b.smi_closed_form(0.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((b.mi_closed_form(0.0).unwrap() + 0.5 * 0.75f64.ln()).abs() < 1e-15);
        assert!(GmmSpec::x_shaped(0.5).unwrap().mi_closed_form(0.0).is_none());
        assert!(GmmSpec::x_shaped(1.0).is_err());
    }

    #[test]
    fn log_ratio_of_independent_law_is_zero() {
        let g = GmmSpec::x_shaped(0.0).unwrap();
        for (x, y) in [(0.0, 0.0), (1.3, -2.1), (-0.4, 3.0)] {
            assert!(g.log_density_ratio(x, y, 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn log_ratio_matches_direct_density() {
        let b = GmmSpec::bivariate_normal(0.6).unwrap();
        let (x, y, s2): (f64, f64, f64) = (0.7, -0.2, 0.3);
        let v = 1.0 + s2;
        let det = v * v - 0.36;
        let joint = (-(v * x * x - 1.2 * x * y + v * y * y) / (2.0 * det)).exp() / (2.0 * std::f64::consts::PI * det.sqrt());
        let mx = (-x * x / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let my = (-y * y / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        assert!((b.log_density_ratio(x, y, s2) - (joint / (mx * my)).ln()).abs() < 1e-12);
    }

    #[test]
    fn samples_are_reproducible_and_uncorrelated() {
        let g = GmmSpec::x_shaped(0.9).unwrap();
        let a = gmm_sample(&g, 100_000, 7);
        assert_eq!(a, gmm_sample(&g, 100_000, 7));
        assert_ne!(a, gmm_sample(&g, 100_000, 8));
        let l = a.len() as f64;
        let corr = a.x().iter().zip(a.y()).map(|(x, y)| x * y).sum::<f64>() / l;
        assert!(corr.abs() < 0.02);
        let vx = a.x().iter().map(|x| x * x).sum::<f64>() / l;
        // var(x^2) = 2 for a standard normal
        assert!((vx - 1.0).abs() < 3.0 * (2.0 / l).sqrt());
    }

    #[test]
    fn independent_mixture_gives_zero_genie() {
        let g = GmmSpec::x_shaped(0.0).unwrap();
        let run = genie(&g, &GenieConfig::new(20_000, 1, 0.1).unwrap());
        assert!(run.smi.value.abs() < 1e-12 && run.mi.value.abs() < 1e-12);
    }

    #[test]
    fn gaussian_genie_matches_closed_form() {
        let b = GmmSpec::bivariate_normal(0.3).unwrap();
        let run = genie(&b, &GenieConfig::new(200_000, 3, 0.0).unwrap());
        let (mi, smi) = crate::measures::gaussian_closed_forms(0.3).unwrap();
        assert!(run.smi.within(smi, 3.0), "{:?} vs {smi}", run.smi);
        assert!(run.mi.within(mi, 3.0), "{:?} vs {mi}", run.mi);
    }

    #[test]
    fn random_channels_are_valid_and_reproducible() {
        let a = random_dmc(2, 2, 11).unwrap();
        assert_eq!(a, random_dmc(2, 2, 11).unwrap());
        let c = random_dmc(4, 5, 3).unwrap();
        for col in c.channel().column_iter() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
        }
        assert!(random_dmc(1, 3, 0).is_err());
    }

    #[test]
    fn joint_genie_matches_exact_sum() {
        let spec = random_dmc(3, 3, 5).unwrap();
        let j = spec.joint();
        let run = genie_joint(&j, &GenieConfig::new(100_000, 9, 0.0).unwrap());
        assert!(run.smi.within(smi_exact(&j).unwrap(), 3.0));
        assert!(run.mi.within(mutual_information(&j).unwrap(), 3.0));
        let s = sample_joint(&j, 1000, 1, 2);
        assert_eq!(s.len(), 1000);
    }
}
