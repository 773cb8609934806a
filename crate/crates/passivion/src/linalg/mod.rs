//! Dense kernels used across the crate: real Schur reduction, a
//! Bartels–Stewart Lyapunov solver built on it, and a handful of small
//! helpers that nalgebra does not provide directly.

mod lyapunov;
mod schur;

pub use lyapunov::{solve_lyapunov, LyapunovError};
pub use schur::{eigenvalues, real_schur, RealSchur, SchurError};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Frobenius inner product `tr(Uᵀ V)`.
pub fn frob_inner(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    u.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

/// Spectral norm. Exact (via SVD) at desk scale; power iteration on `MᵀM`
/// beyond that, which is plenty for the thresholding decisions it feeds.
pub fn spectral_norm_estimate(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    if n == 0 {
        return 0.0;
    }
    if n <= 64 && m.nrows() <= 64 {
        return singular_values(m).first().copied().unwrap_or(0.0);
    }
    let mut v = DVector::<f64>::from_element(n, 1.0 / (n as f64).sqrt());
    let mut sigma = 0.0;
    for _ in 0..100 {
        let w = m.transpose() * (m * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        let stall = (next - sigma).abs() <= 1e-10 * next.max(1.0);
        sigma = next;
        v = w / norm;
        if stall {
            break;
        }
    }
    sigma
}

/// Lift a real matrix to complex entries.
pub fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| Complex64::new(m[(i, j)], 0.0))
}

/// Singular values of a real matrix, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let svd = m.clone().svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Eigenvalues of a small symmetric matrix, ascending, with the eigenvector
/// of the smallest one.
pub fn symmetric_min_eig(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let sym = 0.5 * (m + m.transpose());
    let se = nalgebra::SymmetricEigen::new(sym);
    let mut idx = 0;
    for i in 0..se.eigenvalues.len() {
        if se.eigenvalues[i] < se.eigenvalues[idx] {
            idx = i;
        }
    }
    (se.eigenvalues[idx], se.eigenvectors.column(idx).into_owned())
}
