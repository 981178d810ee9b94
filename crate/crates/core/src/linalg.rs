//! Small dense linear-algebra helpers shared by the discrete and analog
//! estimators: pairwise summation, Hermitian pseudo-inverse square roots and
//! singular values of complex matrices.

use nalgebra::{Complex, DMatrix};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Relative eigenvalue floor for Hermitian inverse square roots. Eigenvalues
/// below `EIGEN_FLOOR * max_eigenvalue` are treated as exact zeros.
pub const EIGEN_FLOOR: f64 = 1e-10;

const PAIRWISE_BLOCK: usize = 1024;

/// Pairwise (cascade) summation; plain accumulation up to 1024 terms.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        values.iter().sum()
    } else {
        let (lo, hi) = values.split_at(values.len() / 2);
        pairwise_sum(lo) + pairwise_sum(hi)
    }
}

/// Sum of |m_ij|^2.
pub fn frobenius_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn real_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Eigen-factored pseudo-inverse square root of a Hermitian PSD matrix.
///
/// Holds `V` and the scale vector `s` with `s_i = lambda_i^{-1/2}` above the
/// floor and zero below it, so that `R^{+1/2} = V diag(s) V^H`.
#[derive(Debug, Clone)]
pub struct Whitener {
    vectors: CMatrix,
    scale: Vec<f64>,
    /// Sum of |lambda| over the floored eigenvalues, relative to the trace.
    pub floored_fraction: f64,
    /// Number of eigenvalues treated as zero.
    pub rank_deficit: usize,
}

impl Whitener {
    pub fn new(r: &CMatrix) -> Self {
        assert!(r.is_square(), "whitener needs a square matrix");
        let n = r.nrows();
        if n == 0 {
            return Self {
                vectors: CMatrix::zeros(0, 0),
                scale: Vec::new(),
                floored_fraction: 0.0,
                rank_deficit: 0,
            };
        }
        let herm = (r + r.adjoint()).scale(0.5);
        let eig = herm.symmetric_eigen();
        let max = eig.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v));
        let trace: f64 = eig.eigenvalues.iter().map(|v| v.abs()).sum();
        let floor = EIGEN_FLOOR * max;
        let mut floored = 0.0;
        let mut deficit = 0;
        let scale = eig
            .eigenvalues
            .iter()
            .map(|&lambda| {
                if lambda > floor && lambda > 0.0 {
                    1.0 / lambda.sqrt()
                } else {
                    floored += lambda.abs();
                    deficit += 1;
                    0.0
                }
            })
            .collect();
        Self {
            vectors: eig.eigenvectors,
            scale,
            floored_fraction: if trace > 0.0 { floored / trace } else { 0.0 },
            rank_deficit: deficit,
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    /// The explicit matrix `R^{+1/2}`.
    pub fn matrix(&self) -> CMatrix {
        let mut vs = self.vectors.clone();
        for (j, &s) in self.scale.iter().enumerate() {
            vs.column_mut(j).scale_mut(s);
        }
        vs * self.vectors.adjoint()
    }

    /// Rotated coherence `diag(s_x) V_x^H C V_y diag(s_y)`. It differs from
    /// `R_x^{+1/2} C R_y^{+1/2}` by unitary factors only, so singular values
    /// and Frobenius norm coincide.
    pub fn coherence(left: &Whitener, cross: &CMatrix, right: &Whitener) -> CMatrix {
        let mut m = left.vectors.adjoint() * cross * &right.vectors;
        for (i, &s) in left.scale.iter().enumerate() {
            m.row_mut(i).scale_mut(s);
        }
        for (j, &s) in right.scale.iter().enumerate() {
            m.column_mut(j).scale_mut(s);
        }
        m
    }
}

pub fn real_matrix_to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| C64::new(v, 0.0))
}
