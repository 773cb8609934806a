//! Bartels–Stewart solver for the continuous Lyapunov equation
//! `A X + X Aᵀ + W = 0` with symmetric `W`, built on the in-repo real Schur
//! reduction. After reducing `A = Q T Qᵀ` the transformed equation
//! `T Y + Y Tᵀ = -Qᵀ W Q` is solved by block back-substitution over the
//! quasi-triangular structure, one 1x1 or 2x2 block column at a time.

use nalgebra::DMatrix;
use thiserror::Error;

use super::schur::{real_schur, SchurError};

#[derive(Debug, Error)]
pub enum LyapunovError {
    #[error("matrix dimensions are inconsistent")]
    DimensionMismatch,
    #[error(transparent)]
    Schur(#[from] SchurError),
    #[error("singular diagonal solve: eigenvalues of A are not sum-free (A likely not stable)")]
    SingularBlock,
}

/// Solves `A X + X Aᵀ + W = 0` for symmetric `W`. The equation is uniquely
/// solvable whenever no two eigenvalues of `A` sum to zero, which holds in
/// particular for stable `A`.
pub fn solve_lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>, LyapunovError> {
    let n = a.nrows();
    if a.ncols() != n || w.nrows() != n || w.ncols() != n {
        return Err(LyapunovError::DimensionMismatch);
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let schur = real_schur(a)?;
    let t = &schur.t;
    let q = &schur.q;
    let c = q.transpose() * (-w) * q;
    let blocks = schur.diagonal_blocks();
    let mut y = DMatrix::<f64>::zeros(n, n);

    for (bj, &(j0, sj)) in blocks.iter().enumerate().rev() {
        // rhs_j = C[:, J] - sum_{K > J} Y[:, K] T[J, K]^T
        let mut rhs = c.columns(j0, sj).into_owned();
        for &(k0, sk) in blocks.iter().skip(bj + 1) {
            let tjk = t.view((j0, k0), (sj, sk));
            let yk = y.view((0, k0), (n, sk));
            rhs -= yk * tjk.transpose().into_owned();
        }
        // Solve T Y[:, J] + Y[:, J] T[J, J]^T = rhs by block rows, bottom-up.
        let tjj = t.view((j0, j0), (sj, sj)).into_owned();
        for (bi, &(i0, si)) in blocks.iter().enumerate().rev() {
            let mut small_rhs = rhs.rows(i0, si).into_owned();
            for &(k0, sk) in blocks.iter().skip(bi + 1) {
                let tik = t.view((i0, k0), (si, sk));
                let ykj = y.view((k0, j0), (sk, sj));
                small_rhs -= tik * ykj;
            }
            let tii = t.view((i0, i0), (si, si)).into_owned();
            let block = solve_small_sylvester(&tii, &tjj, &small_rhs)?;
            y.view_mut((i0, j0), (si, sj)).copy_from(&block);
        }
    }

    let x = q * y * q.transpose();
    // W symmetric makes the exact solution symmetric; clean up roundoff.
    Ok(0.5 * (&x + x.transpose()))
}

/// Solves `A X + X Bᵀ = C` for blocks of size at most 2x2 by vectorizing to
/// `(I ⊗ A + B ⊗ I) vec(X) = vec(C)`.
fn solve_small_sylvester(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LyapunovError> {
    let si = a.nrows();
    let sj = b.nrows();
    let dim = si * sj;
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    // vec index: column-major, (row r, col s) -> s * si + r.
    for s in 0..sj {
        for r in 0..si {
            let row = s * si + r;
            for rr in 0..si {
                m[(row, s * si + rr)] += a[(r, rr)];
            }
            for ss in 0..sj {
                m[(row, ss * si + r)] += b[(s, ss)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_fn(dim, |k, _| c[(k % si, k / si)]);
    let lu = m.lu();
    match lu.solve(&rhs) {
        Some(sol) => Ok(DMatrix::from_fn(si, sj, |r, s| sol[s * si + r])),
        None => Err(LyapunovError::SingularBlock),
    }
}
