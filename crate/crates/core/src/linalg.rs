//! Small Hermitian-matrix helpers on top of `nalgebra`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{CVector, Complex64};

/// Dense complex matrix; lifted beamformers are Hermitian.
pub type CMatrix = DMatrix<Complex64>;

/// `w w^H`.
pub fn outer(w: &[Complex64]) -> CMatrix {
    let n = w.len();
    CMatrix::from_fn(n, n, |i, j| w[i] * w[j].conj())
}

/// Real part of `h^H M h` (exact for Hermitian `M`).
pub fn quad_form(h: &[Complex64], m: &CMatrix) -> f64 {
    let n = h.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (h[i].conj() * m[(i, j)] * h[j]).re;
        }
    }
    acc
}

pub fn trace_re(m: &CMatrix) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].re).sum()
}

/// `(M + M^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Eigenvalues in descending order with matching eigenvectors (columns).
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    hermitian_eigen(m).0.last().copied().unwrap_or(0.0)
}

/// Principal-eigenvector recovery of a lifted beamformer.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOne {
    /// `sqrt(lambda_1) u_1`; zero when `lambda_1 <= 0`.
    pub vector: CVector,
    /// `lambda_2 / lambda_1`, or 0 when `lambda_1 <= 0` or the matrix is 1x1.
    pub eigen_ratio: f64,
}

pub fn rank_one_recovery(m: &CMatrix) -> RankOne {
    let n = m.nrows();
    if n == 0 {
        return RankOne {
            vector: Vec::new(),
            eigen_ratio: 0.0,
        };
    }
    let (values, vectors) = hermitian_eigen(m);
    let top = values[0];
    if !(top > 0.0) {
        return RankOne {
            vector: alloc::vec![Complex64::new(0.0, 0.0); n],
            eigen_ratio: 0.0,
        };
    }
    let scale = libm::sqrt(top);
    let vector = (0..n).map(|i| vectors[(i, 0)] * scale).collect();
    let eigen_ratio = if n > 1 { values[1].max(0.0) / top } else { 0.0 };
    RankOne {
        vector,
        eigen_ratio,
    }
}
