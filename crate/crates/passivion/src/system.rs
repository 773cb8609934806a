//! State-space systems, the Hamiltonian matrices attached to passivity in the
//! immittance (positive-real) and scattering (bounded-real) settings, the
//! extended pencils that avoid feedthrough inversion, and independent
//! frequency-domain passivity diagnostics.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{self, eigenvalues, spectral_norm_estimate};

/// Which realness notion the system is checked against.
///
/// `PositiveReal` is passivity of a quadratic (`p = m`) system in the
/// immittance representation, `BoundedReal` is contractivity in the
/// scattering representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealnessMode {
    PositiveReal,
    BoundedReal,
}

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("matrix dimensions are inconsistent: A {a:?}, B {b:?}, C {c:?}, D {d:?}")]
    DimensionMismatch {
        a: (usize, usize),
        b: (usize, usize),
        c: (usize, usize),
        d: (usize, usize),
    },
    #[error("system matrices contain non-finite entries")]
    NonFinite,
    #[error("positive-real mode requires a square feedthrough (p = m), got p={p}, m={m}")]
    NonSquareFeedthrough { p: usize, m: usize },
    #[error("state matrix is not stable: spectral abscissa {abscissa:.6e} >= 0")]
    UnstableA { abscissa: f64 },
    #[error("feedthrough violates the {mode:?} definiteness condition (margin {margin:.6e})")]
    DefinitenessViolation { mode: RealnessMode, margin: f64 },
    #[error("resolvent solve singular at omega = {omega:.6e}")]
    PoleOnGrid { omega: f64 },
    #[error("eigenvalue computation failed: {0}")]
    Eigen(#[from] linalg::SchurError),
}

/// Real LTI system `(A, B, C, D)` together with its realness mode. All
/// invariants (finiteness, stability of `A`, the mode definiteness condition)
/// are checked on construction; instances are immutable afterwards.
#[derive(Debug, Clone)]
pub struct StateSpaceSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    mode: RealnessMode,
}

/// System blocks without construction invariants. The gradient flow moves
/// through perturbed systems that may transiently violate stability or the
/// feedthrough condition, so most internal computations run on blocks.
#[derive(Debug, Clone)]
pub struct SystemBlocks {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub mode: RealnessMode,
}

impl StateSpaceSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        mode: RealnessMode,
    ) -> Result<Self, SystemError> {
        let n = a.nrows();
        let m = b.ncols();
        let p = c.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.nrows() != p || d.ncols() != m {
            return Err(SystemError::DimensionMismatch {
                a: a.shape(),
                b: b.shape(),
                c: c.shape(),
                d: d.shape(),
            });
        }
        for mat in [&a, &b, &c, &d] {
            if mat.iter().any(|x| !x.is_finite()) {
                return Err(SystemError::NonFinite);
            }
        }
        if mode == RealnessMode::PositiveReal && p != m {
            return Err(SystemError::NonSquareFeedthrough { p, m });
        }
        let abscissa = stability_margin(&a)?;
        if abscissa >= 0.0 {
            return Err(SystemError::UnstableA { abscissa });
        }
        let margin = feedthrough_margin(&d, mode);
        if margin <= 0.0 {
            return Err(SystemError::DefinitenessViolation { mode, margin });
        }
        Ok(Self { a, b, c, d, mode })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn mode(&self) -> RealnessMode {
        self.mode
    }
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// The block matrix `[A B; C D]` of size `(n+p) x (n+m)`.
    pub fn block_matrix(&self) -> DMatrix<f64> {
        block_matrix_of(&self.a, &self.b, &self.c, &self.d)
    }

    pub fn blocks(&self) -> SystemBlocks {
        SystemBlocks {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            d: self.d.clone(),
            mode: self.mode,
        }
    }

    /// Transfer function `H(s) = C (sI - A)^{-1} B + D`.
    pub fn transfer(&self, s: Complex64) -> Result<DMatrix<Complex64>, SystemError> {
        self.blocks().transfer(s)
    }
}

impl SystemBlocks {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn block_matrix(&self) -> DMatrix<f64> {
        block_matrix_of(&self.a, &self.b, &self.c, &self.d)
    }

    /// Splits a `(n+p) x (n+m)` block matrix back into system blocks.
    pub fn from_block_matrix(
        x: &DMatrix<f64>,
        n: usize,
        m: usize,
        p: usize,
        mode: RealnessMode,
    ) -> Self {
        debug_assert_eq!(x.shape(), (n + p, n + m));
        SystemBlocks {
            a: x.view((0, 0), (n, n)).into_owned(),
            b: x.view((0, n), (n, m)).into_owned(),
            c: x.view((n, 0), (p, n)).into_owned(),
            d: x.view((n, n), (p, m)).into_owned(),
            mode,
        }
    }

    /// Attempts to promote the blocks into a validated system.
    pub fn validate(self) -> Result<StateSpaceSystem, SystemError> {
        StateSpaceSystem::new(self.a, self.b, self.c, self.d, self.mode)
    }

    pub fn transfer(&self, s: Complex64) -> Result<DMatrix<Complex64>, SystemError> {
        let n = self.n();
        let shifted = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
            diag - Complex64::new(self.a[(i, j)], 0.0)
        });
        let rhs = linalg::complexify(&self.b);
        let lu = shifted.lu();
        let solved = lu
            .solve(&rhs)
            .ok_or(SystemError::PoleOnGrid { omega: s.im })?;
        Ok(linalg::complexify(&self.c) * solved + linalg::complexify(&self.d))
    }
}

fn block_matrix_of(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (n, m, p) = (a.nrows(), b.ncols(), c.nrows());
    let mut x = DMatrix::zeros(n + p, n + m);
    x.view_mut((0, 0), (n, n)).copy_from(a);
    x.view_mut((0, n), (n, m)).copy_from(b);
    x.view_mut((n, 0), (p, n)).copy_from(c);
    x.view_mut((n, n), (p, m)).copy_from(d);
    x
}

/// Margin of the mode condition on the feedthrough: smallest eigenvalue of
/// `D + Dᵀ` (positive real) or `1 - ||D||₂` (bounded real). Positive means
/// the Hamiltonian formula is valid.
pub fn feedthrough_margin(d: &DMatrix<f64>, mode: RealnessMode) -> f64 {
    match mode {
        RealnessMode::PositiveReal => {
            if d.nrows() != d.ncols() {
                return f64::NEG_INFINITY;
            }
            let (min_eig, _) = linalg::symmetric_min_eig(&(d + d.transpose()));
            min_eig
        }
        RealnessMode::BoundedReal => 1.0 - spectral_norm_estimate(d),
    }
}

/// Spectral abscissa of a square matrix: the largest real part over its
/// eigenvalues.
pub fn stability_margin(a: &DMatrix<f64>) -> Result<f64, SystemError> {
    if a.nrows() != a.ncols() {
        return Err(SystemError::DimensionMismatch {
            a: a.shape(),
            b: (0, 0),
            c: (0, 0),
            d: (0, 0),
        });
    }
    if a.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    let eigs = eigenvalues(a)?;
    Ok(eigs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Low-rank correction `M = blkdiag(A, -Aᵀ) + P W Qᵀ` carried alongside the
/// dense Hamiltonian for shifted-solve acceleration.
#[derive(Debug, Clone)]
pub struct LowRankUpdate {
    pub p: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

/// Real `2n x 2n` Hamiltonian matrix `M(X)` together with the `A` block it
/// was assembled from and an optional low-rank split.
#[derive(Debug, Clone)]
pub struct HamiltonianMatrix {
    pub m: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub lowrank: Option<LowRankUpdate>,
}

impl HamiltonianMatrix {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// `||(JM)ᵀ - JM||_F`, the deviation from Hamiltonian symmetry.
    pub fn symmetry_defect(&self) -> f64 {
        let jm = apply_j(&self.m);
        (jm.transpose() - &jm).norm()
    }
}

/// `J M` for `J = [[0, I], [-I, 0]]`.
pub fn apply_j(m: &DMatrix<f64>) -> DMatrix<f64> {
    let two_n = m.nrows();
    let n = two_n / 2;
    let mut jm = DMatrix::zeros(two_n, two_n);
    jm.view_mut((0, 0), (n, two_n))
        .copy_from(&m.view((n, 0), (n, two_n)));
    let lower = -m.view((0, 0), (n, two_n));
    jm.view_mut((n, 0), (n, two_n)).copy_from(&lower);
    jm
}

/// Builds `M_p(X)` or `M_b(X)` according to the system mode.
///
/// Fails with `DefinitenessViolation` when the feedthrough leaves the
/// validity region of the explicit formula; the extended pencil remains
/// usable there.
pub fn build_hamiltonian(sys: &StateSpaceSystem) -> Result<HamiltonianMatrix, SystemError> {
    hamiltonian_of_blocks(&sys.blocks())
}

/// Same as [`build_hamiltonian`] but for unvalidated blocks; used while the
/// flow explores perturbed systems.
pub fn hamiltonian_of_blocks(blocks: &SystemBlocks) -> Result<HamiltonianMatrix, SystemError> {
    let (n, m, p) = (blocks.n(), blocks.m(), blocks.p());
    let (a, b, c, d) = (&blocks.a, &blocks.b, &blocks.c, &blocks.d);
    match blocks.mode {
        RealnessMode::PositiveReal => {
            if p != m {
                return Err(SystemError::NonSquareFeedthrough { p, m });
            }
            let t = d + d.transpose();
            let t_inv = t.clone().lu().try_inverse().ok_or_else(|| {
                SystemError::DefinitenessViolation {
                    mode: RealnessMode::PositiveReal,
                    margin: feedthrough_margin(d, RealnessMode::PositiveReal),
                }
            })?;
            // M_p = blkdiag(A, -Aᵀ) - [B; -Cᵀ] T^{-1} (C, Bᵀ)
            let mut u = DMatrix::zeros(2 * n, m);
            u.view_mut((0, 0), (n, m)).copy_from(b);
            u.view_mut((n, 0), (n, m)).copy_from(&(-c.transpose()));
            let mut v = DMatrix::zeros(2 * n, m);
            v.view_mut((0, 0), (n, m)).copy_from(&c.transpose());
            v.view_mut((n, 0), (n, m)).copy_from(b);
            let w = -t_inv;
            let mut mat = DMatrix::zeros(2 * n, 2 * n);
            mat.view_mut((0, 0), (n, n)).copy_from(a);
            mat.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
            mat += &u * &w * v.transpose();
            let lowrank = (m < 2 * n).then(|| LowRankUpdate { p: u, w, q: v });
            Ok(HamiltonianMatrix {
                m: mat,
                a: a.clone(),
                lowrank,
            })
        }
        RealnessMode::BoundedReal => {
            let r = d.transpose() * d - DMatrix::identity(m, m);
            let k_inv = (-&r).lu().try_inverse().ok_or_else(|| {
                SystemError::DefinitenessViolation {
                    mode: RealnessMode::BoundedReal,
                    margin: feedthrough_margin(d, RealnessMode::BoundedReal),
                }
            })?;
            // M_b = [A 0; -CᵀC -Aᵀ] + [B; -CᵀD] (I - DᵀD)^{-1} (DᵀC, Bᵀ)
            let mut mat = DMatrix::zeros(2 * n, 2 * n);
            mat.view_mut((0, 0), (n, n)).copy_from(a);
            mat.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
            mat.view_mut((n, 0), (n, n))
                .copy_from(&(-(c.transpose() * c)));
            let mut u = DMatrix::zeros(2 * n, m);
            u.view_mut((0, 0), (n, m)).copy_from(b);
            u.view_mut((n, 0), (n, m))
                .copy_from(&(-(c.transpose() * d)));
            let mut v = DMatrix::zeros(2 * n, m);
            v.view_mut((0, 0), (n, m)).copy_from(&(c.transpose() * d));
            v.view_mut((n, 0), (n, m)).copy_from(b);
            mat += &u * &k_inv * v.transpose();
            // The -CᵀC block joins the update: blkdiag + [P1 P2] W [Q1 Q2]ᵀ.
            let lowrank = (m + p < 2 * n).then(|| {
                let q_total = m + p;
                let mut pp = DMatrix::zeros(2 * n, q_total);
                pp.view_mut((0, 0), (2 * n, m)).copy_from(&u);
                pp.view_mut((n, m), (n, p)).copy_from(&c.transpose());
                let mut ww = DMatrix::zeros(q_total, q_total);
                ww.view_mut((0, 0), (m, m)).copy_from(&k_inv);
                ww.view_mut((m, m), (p, p))
                    .copy_from(&(-DMatrix::<f64>::identity(p, p)));
                let mut qq = DMatrix::zeros(2 * n, q_total);
                qq.view_mut((0, 0), (2 * n, m)).copy_from(&v);
                qq.view_mut((0, m), (n, p)).copy_from(&c.transpose());
                LowRankUpdate { p: pp, w: ww, q: qq }
            });
            Ok(HamiltonianMatrix {
                m: mat,
                a: a.clone(),
                lowrank,
            })
        }
    }
}

/// Extended Hamiltonian pencil `lambda * rhs - lhs`; its finite eigenvalues
/// characterize strict realness without inverting the feedthrough term.
#[derive(Debug, Clone)]
pub struct ExtendedPencil {
    pub lhs: DMatrix<f64>,
    pub rhs: DMatrix<f64>,
    dyn_dim: usize,
}

impl ExtendedPencil {
    pub fn dim(&self) -> usize {
        self.lhs.nrows()
    }

    /// Finite eigenvalues, computed by eliminating the algebraic part
    /// against the trailing block of `lhs`. For the bounded-real layout that
    /// block is invertible unconditionally; for the positive-real one it
    /// requires `D + Dᵀ` to be invertible (definiteness is not needed).
    pub fn finite_eigenvalues(&self) -> Result<Vec<Complex64>, SystemError> {
        Ok(eigenvalues(&self.reduced_matrix()?)?)
    }

    /// The `2n x 2n` matrix whose spectrum equals the finite pencil
    /// eigenvalues: `K11 - K12 K22^{-1} K21`.
    pub fn reduced_matrix(&self) -> Result<DMatrix<f64>, SystemError> {
        let nd = self.dyn_dim;
        let total = self.lhs.nrows();
        let alg = total - nd;
        let k11 = self.lhs.view((0, 0), (nd, nd));
        let k12 = self.lhs.view((0, nd), (nd, alg));
        let k21 = self.lhs.view((nd, 0), (alg, nd)).into_owned();
        let k22 = self.lhs.view((nd, nd), (alg, alg)).into_owned();
        let solved = k22.lu().solve(&k21).ok_or(SystemError::DefinitenessViolation {
            mode: RealnessMode::PositiveReal,
            margin: 0.0,
        })?;
        Ok(k11.into_owned() - k12 * solved)
    }
}

/// Assembles the extended pencil for the system mode: size `(2n+m)` for
/// positive real, `(2n+m+p)` for bounded real.
pub fn build_extended_pencil(sys: &StateSpaceSystem) -> ExtendedPencil {
    pencil_of_blocks(&sys.blocks())
}

pub fn pencil_of_blocks(blocks: &SystemBlocks) -> ExtendedPencil {
    let (n, m, p) = (blocks.n(), blocks.m(), blocks.p());
    let (a, b, c, d) = (&blocks.a, &blocks.b, &blocks.c, &blocks.d);
    match blocks.mode {
        RealnessMode::PositiveReal => {
            let total = 2 * n + m;
            let mut lhs = DMatrix::zeros(total, total);
            lhs.view_mut((0, 0), (n, n)).copy_from(a);
            lhs.view_mut((0, 2 * n), (n, m)).copy_from(b);
            lhs.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
            lhs.view_mut((n, 2 * n), (n, m))
                .copy_from(&(-c.transpose()));
            lhs.view_mut((2 * n, 0), (m, n)).copy_from(c);
            lhs.view_mut((2 * n, n), (m, n)).copy_from(&b.transpose());
            lhs.view_mut((2 * n, 2 * n), (m, m))
                .copy_from(&(d + d.transpose()));
            let mut rhs = DMatrix::zeros(total, total);
            rhs.view_mut((0, 0), (2 * n, 2 * n))
                .copy_from(&DMatrix::identity(2 * n, 2 * n));
            ExtendedPencil {
                lhs,
                rhs,
                dyn_dim: 2 * n,
            }
        }
        RealnessMode::BoundedReal => {
            let total = 2 * n + m + p;
            let mut lhs = DMatrix::zeros(total, total);
            lhs.view_mut((0, 0), (n, n)).copy_from(a);
            lhs.view_mut((0, 2 * n), (n, m)).copy_from(b);
            lhs.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
            lhs.view_mut((n, 2 * n + m), (n, p))
                .copy_from(&(-c.transpose()));
            lhs.view_mut((2 * n, n), (m, n)).copy_from(&b.transpose());
            lhs.view_mut((2 * n, 2 * n), (m, m))
                .copy_from(&(-DMatrix::<f64>::identity(m, m)));
            lhs.view_mut((2 * n, 2 * n + m), (m, p))
                .copy_from(&d.transpose());
            lhs.view_mut((2 * n + m, 0), (p, n)).copy_from(c);
            lhs.view_mut((2 * n + m, 2 * n), (p, m)).copy_from(d);
            // Trailing block is -I_p: the last block row encodes the output
            // equation y = C x1 + D u, so eliminating (u, y) reproduces the
            // bounded-real Hamiltonian exactly.
            lhs.view_mut((2 * n + m, 2 * n + m), (p, p))
                .copy_from(&(-DMatrix::<f64>::identity(p, p)));
            let mut rhs = DMatrix::zeros(total, total);
            rhs.view_mut((0, 0), (2 * n, 2 * n))
                .copy_from(&DMatrix::identity(2 * n, 2 * n));
            ExtendedPencil {
                lhs,
                rhs,
                dyn_dim: 2 * n,
            }
        }
    }
}

/// Per-frequency realness report: the minimal eigenvalue of
/// `H(iw) + H(iw)*` (positive real) or `I - H(iw)* H(iw)` (bounded real).
#[derive(Debug, Clone)]
pub struct RealnessReport {
    pub samples: Vec<(f64, f64)>,
    pub min_value: f64,
    pub min_omega: f64,
    pub passive: bool,
}

/// Default log-spaced frequency grid over `[1e-3, 1e3]` with 400 points.
pub fn default_frequency_grid() -> Vec<f64> {
    let count = 400;
    (0..count)
        .map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / (count - 1) as f64))
        .collect()
}

/// Sweeps the transfer function over the given frequencies and reports the
/// pointwise realness margin. Serves as an oracle independent of the
/// Hamiltonian eigenvalue test.
pub fn check_realness_grid(
    sys: &StateSpaceSystem,
    freqs: &[f64],
) -> Result<RealnessReport, SystemError> {
    let mut samples = Vec::with_capacity(freqs.len());
    let mut min_value = f64::INFINITY;
    let mut min_omega = f64::NAN;
    for &omega in freqs {
        let h = sys.transfer(Complex64::new(0.0, omega))?;
        let value = match sys.mode {
            RealnessMode::PositiveReal => {
                let herm = &h + h.adjoint();
                hermitian_min_eig(&herm)
            }
            RealnessMode::BoundedReal => {
                let gram = DMatrix::identity(h.ncols(), h.ncols()) - h.adjoint() * &h;
                hermitian_min_eig(&gram)
            }
        };
        if value < min_value {
            min_value = value;
            min_omega = omega;
        }
        samples.push((omega, value));
    }
    Ok(RealnessReport {
        samples,
        min_value,
        min_omega,
        passive: min_value >= -1e-12,
    })
}

fn hermitian_min_eig(h: &DMatrix<Complex64>) -> f64 {
    // Embed the hermitian matrix into a real symmetric one of twice the
    // size: eig([Re -Im; Im Re]) duplicates the hermitian spectrum.
    let k = h.nrows();
    let mut s = DMatrix::<f64>::zeros(2 * k, 2 * k);
    for i in 0..k {
        for j in 0..k {
            s[(i, j)] = h[(i, j)].re;
            s[(i + k, j + k)] = h[(i, j)].re;
            s[(i, j + k)] = -h[(i, j)].im;
            s[(i + k, j)] = h[(i, j)].im;
        }
    }
    let (min_eig, _) = linalg::symmetric_min_eig(&s);
    min_eig
}

/// Mirror defect of a Hamiltonian spectrum: how far the eigenvalue multiset
/// is from being closed under `lambda -> -conj(lambda)`, via greedy
/// nearest-pair matching.
pub fn spectrum_mirror_defect(eigs: &[Complex64]) -> f64 {
    let mut pool: Vec<Complex64> = eigs.to_vec();
    let mut worst: f64 = 0.0;
    while let Some(lam) = pool.pop() {
        let target = Complex64::new(-lam.re, lam.im);
        let self_dist = (lam - target).norm();
        let mut best = f64::INFINITY;
        let mut best_idx = None;
        for (i, cand) in pool.iter().enumerate() {
            let dist = (cand - target).norm();
            if dist < best {
                best = dist;
                best_idx = Some(i);
            }
        }
        if self_dist <= best {
            worst = worst.max(self_dist);
        } else if let Some(i) = best_idx {
            pool.swap_remove(i);
            worst = worst.max(best);
        } else {
            worst = worst.max(self_dist);
        }
    }
    worst
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Example system with on-axis Hamiltonian eigenvalues (non-passive).
    pub fn example1() -> StateSpaceSystem {
        StateSpaceSystem::new(
            DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, -1.0, -0.5]),
            DMatrix::from_row_slice(2, 1, &[0.5, 0.5]),
            DMatrix::from_row_slice(1, 2, &[0.5, 0.5]),
            DMatrix::from_row_slice(1, 1, &[0.5]),
            RealnessMode::BoundedReal,
        )
        .unwrap()
    }

    /// Example passive system; its Hamiltonian spectrum is real.
    pub fn example2() -> StateSpaceSystem {
        StateSpaceSystem::new(
            DMatrix::from_row_slice(3, 3, &[-8.0, -4.0, -1.5, 4.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            DMatrix::from_row_slice(3, 1, &[2.0, 0.0, 0.0]),
            DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.75]),
            DMatrix::from_row_slice(1, 1, &[-0.75]),
            RealnessMode::BoundedReal,
        )
        .unwrap()
    }
}
