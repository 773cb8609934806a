//! Gradient machinery for the eigenvalue optimization: adjoints of the
//! Hamiltonian assembly maps `M'(X)*[W]` for both realness modes, the
//! rescaled free gradient of `phi_eps(E) = Re lambda(M(X + L[eps E]))` in
//! structure coordinates, and the stability/feedthrough penalty gradients.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::eigen::{self, EigenTriple};
use crate::linalg;
use crate::structure::PerturbationStructure;
use crate::system::{
    feedthrough_margin, hamiltonian_of_blocks, pencil_of_blocks, RealnessMode, StateSpaceSystem,
    SystemBlocks,
};

#[derive(Debug, Error)]
pub enum GradientError {
    #[error("T = D + Dᵀ is singular; positive-real adjoint undefined")]
    SingularT,
    #[error("R = DᵀD - I is singular; bounded-real adjoint undefined")]
    SingularR,
    #[error("perturbed feedthrough left the validity region (stability margin {margin_a:.3e}, feedthrough margin {margin_d:.3e})")]
    PerturbedDefinitenessViolation { margin_a: f64, margin_d: f64 },
    #[error(transparent)]
    Eigen(#[from] eigen::EigenError),
    #[error(transparent)]
    Structure(#[from] crate::structure::StructureError),
    #[error("{0}")]
    System(#[from] crate::system::SystemError),
}

/// Thresholds and weights for the stability and feedthrough constraints.
/// `theta_a` bounds the spectral abscissa of the perturbed `A` away from
/// zero; `theta_d` keeps the perturbed feedthrough inside its definiteness
/// region. Weights `c_a, c_d` enter the penalized flow.
#[derive(Debug, Clone, Copy)]
pub struct ConstraintThresholds {
    pub theta_a: f64,
    pub theta_d: f64,
    pub c_a: f64,
    pub c_d: f64,
}

impl Default for ConstraintThresholds {
    fn default() -> Self {
        Self {
            theta_a: 1e-3,
            theta_d: 1e-3,
            c_a: 100.0,
            c_d: 100.0,
        }
    }
}

/// Everything the flow needs at one evaluation point: the rescaled free
/// gradient `G` in structure coordinates, the eigentriple behind it, the
/// penalty gradients (true gradients of the half-squared hinges, zero when
/// inactive) and the constraint margins.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub g: DMatrix<f64>,
    pub triple: EigenTriple,
    /// `Re lambda` of the target, `0.0` exactly when classified imaginary.
    pub phi: f64,
    pub g_a: DMatrix<f64>,
    pub g_d: DMatrix<f64>,
    /// Half-squared hinge penalty values.
    pub phi_a: f64,
    pub phi_d: f64,
    /// `(Re lambda_max(A_pert), feedthrough margin of D_pert)`.
    pub margins: (f64, f64),
    /// Set when the explicit Hamiltonian formula was unavailable and `phi`
    /// came from the extended pencil; `g` is zero in that case.
    pub pencil_fallback: bool,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Adjoint of the positive-real Hamiltonian assembly: `V = M_p'(X)*[W]`
/// partitioned like the system block matrix, with `T = D + Dᵀ`.
pub fn adjoint_mp_prime(
    blocks: &SystemBlocks,
    w: &DMatrix<f64>,
) -> Result<DMatrix<f64>, GradientError> {
    let (n, m) = (blocks.n(), blocks.m());
    let (b, c, d) = (&blocks.b, &blocks.c, &blocks.d);
    let t = d + d.transpose();
    let t_inv = t.lu().try_inverse().ok_or(GradientError::SingularT)?;
    let w11 = w.view((0, 0), (n, n));
    let w12 = w.view((0, n), (n, n)).into_owned();
    let w21 = w.view((n, 0), (n, n)).into_owned();
    let w22 = w.view((n, n), (n, n));
    let vt = w11 - w22.transpose(); // W11 - W22ᵀ

    let v_a = vt.clone();
    let v_b = -(&vt * c.transpose() * &t_inv) - 2.0 * sym(&w12) * b * &t_inv;
    let v_c = -(&t_inv * b.transpose() * &vt) + 2.0 * &t_inv * c * sym(&w21);
    // V_D = 2 sym(T^{-1} (Bᵀ | -C) W [Cᵀ; B] T^{-1})
    let mut left = DMatrix::zeros(m, 2 * n);
    left.view_mut((0, 0), (m, n)).copy_from(&b.transpose());
    left.view_mut((0, n), (m, n)).copy_from(&(-c));
    let mut right = DMatrix::zeros(2 * n, m);
    right.view_mut((0, 0), (n, m)).copy_from(&c.transpose());
    right.view_mut((n, 0), (n, m)).copy_from(b);
    let core = &t_inv * left * w * right * &t_inv;
    let v_d = 2.0 * sym(&core);

    Ok(assemble_blocks(&v_a, &v_b, &v_c, &v_d))
}

/// Adjoint of the bounded-real Hamiltonian assembly: `V = M_b'(X)*[W]`,
/// with `R = DᵀD - I` and `S = DDᵀ - I`.
pub fn adjoint_mb_prime(
    blocks: &SystemBlocks,
    w: &DMatrix<f64>,
) -> Result<DMatrix<f64>, GradientError> {
    let n = blocks.n();
    let (b, c, d) = (&blocks.b, &blocks.c, &blocks.d);
    let m_dim = blocks.m();
    let p_dim = blocks.p();
    let r = d.transpose() * d - DMatrix::identity(m_dim, m_dim);
    let s = d * d.transpose() - DMatrix::identity(p_dim, p_dim);
    let r_inv = r.lu().try_inverse().ok_or(GradientError::SingularR)?;
    let s_inv = s.lu().try_inverse().ok_or(GradientError::SingularR)?;
    let w11 = w.view((0, 0), (n, n));
    let w12 = w.view((0, n), (n, n)).into_owned();
    let w21 = w.view((n, 0), (n, n)).into_owned();
    let w22 = w.view((n, n), (n, n));
    let vt = w11 - w22.transpose();

    let v_a = vt.clone();
    let v_b = -(&vt * c.transpose() * d * &r_inv) - 2.0 * sym(&w12) * b * &r_inv;
    let v_c = -(d * &r_inv * b.transpose() * &vt) + 2.0 * &s_inv * c * sym(&w21);
    let mid = &r_inv * b.transpose() * &vt * c.transpose() * d * &r_inv;
    let v_d = -(c * vt.transpose() * b * &r_inv)
        + 2.0 * d * sym(&mid)
        + 2.0 * d * &r_inv * b.transpose() * sym(&w12) * b * &r_inv
        - 2.0 * &s_inv * c * sym(&w21) * c.transpose() * &s_inv * d;

    Ok(assemble_blocks(&v_a, &v_b, &v_c, &v_d))
}

fn assemble_blocks(
    v_a: &DMatrix<f64>,
    v_b: &DMatrix<f64>,
    v_c: &DMatrix<f64>,
    v_d: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = v_a.nrows();
    let m = v_b.ncols();
    let p = v_c.nrows();
    let mut v = DMatrix::zeros(n + p, n + m);
    v.view_mut((0, 0), (n, n)).copy_from(v_a);
    v.view_mut((0, n), (n, m)).copy_from(v_b);
    v.view_mut((n, 0), (p, n)).copy_from(v_c);
    v.view_mut((n, n), (p, m)).copy_from(v_d);
    v
}

/// `Re(x y*)` as a real matrix; rank at most 2.
pub fn real_outer(x: &DVector<Complex64>, y: &DVector<Complex64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), y.len(), |i, j| (x[i] * y[j].conj()).re)
}

pub(crate) fn adjoint_for_mode(
    blocks: &SystemBlocks,
    w: &DMatrix<f64>,
) -> Result<DMatrix<f64>, GradientError> {
    match blocks.mode {
        RealnessMode::PositiveReal => adjoint_mp_prime(blocks, w),
        RealnessMode::BoundedReal => adjoint_mb_prime(blocks, w),
    }
}

pub(crate) fn perturbed_blocks(
    sys: &StateSpaceSystem,
    structure: &PerturbationStructure,
    eps: f64,
    e: &DMatrix<f64>,
) -> Result<SystemBlocks, GradientError> {
    let dx = structure.apply(e)?;
    let x = sys.block_matrix() + eps * dx;
    Ok(SystemBlocks::from_block_matrix(
        &x,
        sys.state_dim(),
        sys.input_dim(),
        sys.output_dim(),
        sys.mode(),
    ))
}

/// Penalty gradients and hinge values at `X + L[eps E]`.
///
/// `g_a` is the rescaled gradient of the stability hinge
/// `phi_A = 0.5 (theta_A + Re lambda_max(A_pert))_+^2` and `g_d` the true
/// (rescaled) gradient of the feedthrough hinge; both are zero whenever the
/// corresponding margin is safely inside its threshold or the structure
/// cannot touch the block.
pub fn penalty_gradients(
    sys: &StateSpaceSystem,
    structure: &PerturbationStructure,
    eps: f64,
    e: &DMatrix<f64>,
    thresholds: &ConstraintThresholds,
) -> Result<PenaltyData, GradientError> {
    let blocks = perturbed_blocks(sys, structure, eps, e)?;
    penalty_of_blocks(&blocks, structure, thresholds)
}

#[derive(Debug, Clone)]
pub struct PenaltyData {
    pub g_a: DMatrix<f64>,
    pub g_d: DMatrix<f64>,
    pub phi_a: f64,
    pub phi_d: f64,
    pub margin_a: f64,
    pub margin_d: f64,
}

/// Margin the feedthrough hinge penalizes: `lambda_min(sym D)` for positive
/// real, `lambda_min(I - DᵀD)` for bounded real. Both are positive exactly
/// on the validity region, matching [`feedthrough_margin`] in sign.
pub fn hinge_feedthrough_margin(d: &DMatrix<f64>, mode: RealnessMode) -> f64 {
    match mode {
        RealnessMode::PositiveReal => feedthrough_margin(d, mode),
        RealnessMode::BoundedReal => {
            let gram = DMatrix::identity(d.ncols(), d.ncols()) - d.transpose() * d;
            let (lam_min, _) = linalg::symmetric_min_eig(&gram);
            lam_min
        }
    }
}

fn penalty_of_blocks(
    blocks: &SystemBlocks,
    structure: &PerturbationStructure,
    thresholds: &ConstraintThresholds,
) -> Result<PenaltyData, GradientError> {
    let (k, l) = structure.dims();
    let n = blocks.n();
    let margin_a = crate::system::stability_margin(&blocks.a)?;
    let margin_d = hinge_feedthrough_margin(&blocks.d, blocks.mode);
    let mut g_a = DMatrix::zeros(k, l);
    let mut g_d = DMatrix::zeros(k, l);
    let mut phi_a = 0.0;
    let mut phi_d = 0.0;

    if structure.perturbs_a() {
        let hinge = (thresholds.theta_a + margin_a).max(0.0);
        phi_a = 0.5 * hinge * hinge;
        if hinge > 0.0 {
            let (lam, x_a, y_a) = rightmost_eigentriple(&blocks.a)?;
            let _ = lam;
            let outer = real_outer(&x_a, &y_a);
            let mut ambient = DMatrix::zeros(structure.ambient_dims().0, structure.ambient_dims().1);
            ambient.view_mut((0, 0), (n, n)).copy_from(&outer);
            g_a = hinge * structure.apply_adjoint(&ambient)?;
        }
    }
    if structure.perturbs_d() {
        let hinge = (thresholds.theta_d - margin_d).max(0.0);
        phi_d = 0.5 * hinge * hinge;
        if hinge > 0.0 {
            let (rows, cols) = structure.ambient_dims();
            let mut ambient = DMatrix::zeros(rows, cols);
            match blocks.mode {
                RealnessMode::PositiveReal => {
                    // margin is lambda_min(sym D); its derivative along dD
                    // is y_Dᵀ dD y_D, so the hinge gradient carries -y yᵀ.
                    let (_, y_d) = linalg::symmetric_min_eig(&(&blocks.d + blocks.d.transpose()));
                    let outer = &y_d * y_d.transpose();
                    ambient
                        .view_mut((n, n), (blocks.p(), blocks.m()))
                        .copy_from(&(-outer));
                }
                RealnessMode::BoundedReal => {
                    // margin is lambda_min(I - DᵀD) up to the norm form:
                    // using lambda_min(I - DᵀD), d lambda = -2 y_Dᵀ Dᵀ dD y_D.
                    let gram = DMatrix::identity(blocks.m(), blocks.m())
                        - blocks.d.transpose() * &blocks.d;
                    let (_, y_d) = linalg::symmetric_min_eig(&gram);
                    let outer = &blocks.d * &y_d * y_d.transpose();
                    ambient
                        .view_mut((n, n), (blocks.p(), blocks.m()))
                        .copy_from(&(2.0 * outer));
                }
            }
            g_d = hinge * structure.apply_adjoint(&ambient)?;
        }
    }
    Ok(PenaltyData {
        g_a,
        g_d,
        phi_a,
        phi_d,
        margin_a,
        margin_d,
    })
}

/// Rightmost eigenvalue of a real matrix with normalized left and right
/// eigenvectors (`x* y` real positive).
pub fn rightmost_eigentriple(
    a: &DMatrix<f64>,
) -> Result<(Complex64, DVector<Complex64>, DVector<Complex64>), GradientError> {
    let eigs = linalg::eigenvalues(a).map_err(eigen::EigenError::from)?;
    let lam = eigs
        .iter()
        .copied()
        .max_by(|u, v| {
            (u.re, u.im)
                .partial_cmp(&(v.re, v.im))
                .unwrap()
        })
        .expect("nonempty spectrum");
    let triple = eigen::eigentriple_at(a, lam)?;
    Ok((triple.lambda, triple.x, triple.y))
}

/// Evaluates the rescaled free gradient
/// `G = L*[ M'(X + L[eps E])*[Re(x y*)] ]`, the target eigentriple and the
/// penalty data at the perturbed system.
///
/// When the perturbed feedthrough makes the explicit Hamiltonian formula
/// singular, `phi` is recovered from the extended pencil and `g` is zero;
/// the `pencil_fallback` flag tells the flow to rely on the penalty terms.
pub fn free_gradient(
    sys: &StateSpaceSystem,
    structure: &PerturbationStructure,
    eps: f64,
    e: &DMatrix<f64>,
    thresholds: &ConstraintThresholds,
    hint: Option<Complex64>,
    prev: Option<&EigenTriple>,
) -> Result<GradientBundle, GradientError> {
    let blocks = perturbed_blocks(sys, structure, eps, e)?;
    let penalty = penalty_of_blocks(&blocks, structure, thresholds)?;

    match hamiltonian_of_blocks(&blocks) {
        Ok(ham) => {
            let triple = eigen::target_eigentriple_with(&ham, hint, prev)?;
            let w = real_outer(&triple.x, &triple.y);
            let v = adjoint_for_mode(&blocks, &w)?;
            let g = structure.apply_adjoint(&v)?;
            let phi = triple.phi();
            Ok(GradientBundle {
                g,
                phi,
                triple,
                g_a: penalty.g_a,
                g_d: penalty.g_d,
                phi_a: penalty.phi_a,
                phi_d: penalty.phi_d,
                margins: (penalty.margin_a, penalty.margin_d),
                pencil_fallback: false,
            })
        }
        Err(_) => {
            // Formula invalid at this point: evaluate phi through the
            // pencil, report zero free gradient and let penalties act.
            let pencil = pencil_of_blocks(&blocks);
            let eigs = pencil.finite_eigenvalues().map_err(|_| {
                GradientError::PerturbedDefinitenessViolation {
                    margin_a: penalty.margin_a,
                    margin_d: penalty.margin_d,
                }
            })?;
            let scale = eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
            let (lam, on_axis) =
                eigen::select_target(&eigs, eigen::IMAGINARY_CLASSIFICATION_REL * scale.max(1.0))?;
            let (k, l) = structure.dims();
            let dim = 2 * sys.state_dim();
            let triple = EigenTriple {
                lambda: lam,
                x: DVector::zeros(dim),
                y: DVector::zeros(dim),
                kappa: f64::INFINITY,
                sigma2: 0.0,
                imaginary: on_axis,
                warm: false,
            };
            Ok(GradientBundle {
                g: DMatrix::zeros(k, l),
                phi: if on_axis { 0.0 } else { lam.re },
                triple,
                g_a: penalty.g_a,
                g_d: penalty.g_d,
                phi_a: penalty.phi_a,
                phi_d: penalty.phi_d,
                margins: (penalty.margin_a, penalty.margin_d),
                pencil_fallback: true,
            })
        }
    }
}
