//! Rank-r variant of the inner flow: the direction `E` is kept in factored
//! form `E = U S Vᵀ` (orthonormal `U`, `V`, `||S||_F = 1`) and advanced by a
//! norm-preserving projector-splitting step (three K/S/L substeps with QR
//! factorizations, robust to small singular values). Stationary points
//! coincide with those of the full-rank flow whenever the gradient has full
//! rank `r` on the manifold.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::flow::{
    acceptance_metric, constrained_rhs, FlowConfig, FlowError, FlowResult, FlowStats,
    InnerTraceRow,
};
use crate::gradient::{free_gradient, GradientError};
use crate::linalg::singular_values;
use crate::structure::PerturbationStructure;
use crate::system::StateSpaceSystem;

#[derive(Debug, Error)]
pub enum LowRankError {
    #[error("requested rank {r} exceeds the coordinate dimensions {k}x{l}")]
    RankTooLarge { r: usize, k: usize, l: usize },
    #[error("QR factor collapsed to zero; the substep input vanished")]
    RankDeficientQR,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Gradient(#[from] GradientError),
}

/// Factored unit-norm direction `E = U S Vᵀ`. `S` is square invertible but
/// not necessarily diagonal.
#[derive(Debug, Clone)]
pub struct RankRFactor {
    pub u: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl RankRFactor {
    /// Best rank-r approximation of `e`, renormalized to unit Frobenius
    /// norm. `r` is clamped to the dimensions of `e`.
    pub fn from_full(e: &DMatrix<f64>, r: usize) -> Result<Self, LowRankError> {
        let (k, l) = e.shape();
        let r = r.min(k).min(l);
        if r == 0 {
            return Err(LowRankError::RankTooLarge { r, k, l });
        }
        let svd = e.clone().svd(true, true);
        let u_full = svd.u.as_ref().expect("svd with u");
        let vt_full = svd.v_t.as_ref().expect("svd with v_t");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .partial_cmp(&svd.singular_values[a])
                .unwrap()
        });
        let mut u = DMatrix::zeros(k, r);
        let mut v = DMatrix::zeros(l, r);
        let mut s = DMatrix::zeros(r, r);
        for (col, &idx) in order.iter().take(r).enumerate() {
            u.set_column(col, &u_full.column(idx));
            v.set_column(col, &vt_full.row(idx).transpose());
            s[(col, col)] = svd.singular_values[idx];
        }
        // Guard against exactly rank-deficient starts: lift zero singular
        // values to a tiny multiple so S stays invertible.
        let smax = s[(0, 0)].max(f64::MIN_POSITIVE);
        for i in 0..r {
            if s[(i, i)] < 1e-14 * smax {
                s[(i, i)] = 1e-14 * smax;
            }
        }
        let norm = s.norm();
        s /= norm;
        Ok(Self { u, s, v })
    }

    pub fn rank(&self) -> usize {
        self.s.nrows()
    }

    pub fn to_full(&self) -> DMatrix<f64> {
        &self.u * &self.s * self.v.transpose()
    }

    pub fn orthonormality_defect(&self) -> f64 {
        let r = self.rank();
        let du = (self.u.transpose() * &self.u - DMatrix::<f64>::identity(r, r)).norm();
        let dv = (self.v.transpose() * &self.v - DMatrix::<f64>::identity(r, r)).norm();
        du.max(dv)
    }

    /// Re-orthonormalizes `U` and `V` (absorbing the triangular factors
    /// into `S`) and renormalizes `S`.
    pub fn reorthonormalize(&mut self) {
        let qu = self.u.clone().qr();
        let qv = self.v.clone().qr();
        self.s = qu.r() * &self.s * qv.r().transpose();
        self.u = qu.q();
        self.v = qv.q();
        let norm = self.s.norm();
        if norm > 0.0 {
            self.s /= norm;
        }
    }
}

/// Orthogonal projection of `g` onto the tangent space of the rank-r
/// manifold at `E = U S Vᵀ`:  `G V Vᵀ - U Uᵀ G V Vᵀ + U Uᵀ G`.
pub fn tangent_project(factor: &RankRFactor, g: &DMatrix<f64>) -> DMatrix<f64> {
    let uut_g = &factor.u * (factor.u.transpose() * g);
    let g_vvt = (g * &factor.v) * factor.v.transpose();
    let uut_g_vvt = &factor.u * (factor.u.transpose() * &g_vvt);
    g_vvt - uut_g_vvt + uut_g
}

/// Orthonormal factor of `m` by column-pivoted QR with a deterministic sign
/// convention, plus the coefficient matrix `c = qᵀ m` so that `m = q c`.
fn qr_factor(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), LowRankError> {
    if m.norm() == 0.0 {
        return Err(LowRankError::RankDeficientQR);
    }
    let r = m.ncols();
    let qr = m.clone().col_piv_qr();
    let mut q = qr.q();
    let rmat = qr.r();
    // Positive-diagonal convention on the triangular factor.
    for j in 0..r.min(q.ncols()) {
        if rmat[(j, j)] < 0.0 {
            for i in 0..q.nrows() {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    let c = q.transpose() * m;
    Ok((q, c))
}

/// One projector-splitting step along the (already signed) flow field `f`:
/// three substeps K/S/L, each renormalized so the unit Frobenius norm is
/// preserved exactly.
fn splitting_step_field(
    factor: &RankRFactor,
    f: &DMatrix<f64>,
    h: f64,
) -> Result<RankRFactor, LowRankError> {
    // K substep: K1 = U0 S0 + h F V0.
    let k1 = &factor.u * &factor.s + h * (f * &factor.v);
    let (u1, c) = qr_factor(&k1)?;
    let sigma_hat = c.norm();
    if sigma_hat == 0.0 {
        return Err(LowRankError::RankDeficientQR);
    }
    let s_hat = c / sigma_hat;
    // S substep runs backward: S~ = S_hat - h U1ᵀ F V0, renormalized.
    let s_mid = &s_hat - h * (u1.transpose() * f * &factor.v);
    let sigma_mid = s_mid.norm();
    if sigma_mid == 0.0 {
        return Err(LowRankError::RankDeficientQR);
    }
    let s_tilde = s_mid / sigma_mid;
    // L substep: L1 = V0 S~ᵀ + h Fᵀ U1.
    let l1 = &factor.v * s_tilde.transpose() + h * (f.transpose() * &u1);
    let (v1, c2) = qr_factor(&l1)?;
    let sigma1 = c2.norm();
    if sigma1 == 0.0 {
        return Err(LowRankError::RankDeficientQR);
    }
    let s1 = (c2 / sigma1).transpose();
    Ok(RankRFactor { u: u1, s: s1, v: v1 })
}

/// Public splitting step in the flow direction: ascent advances along
/// `+G0`, descent along `-G0`.
pub fn splitting_step(
    factor: &RankRFactor,
    g0: &DMatrix<f64>,
    h: f64,
    direction: crate::flow::FlowDirection,
) -> Result<RankRFactor, LowRankError> {
    let f = direction.sign() * g0;
    splitting_step_field(factor, &f, h)
}

/// Default manifold rank for a structure: 8 for the Gramian-weighted
/// C-only map (its gradient obeys that bound), otherwise the numerical
/// rank of the gradient at the starting point plus two, capped at 16.
/// Always clamped to the coordinate dimensions.
pub fn default_rank(structure: &PerturbationStructure, g0: &DMatrix<f64>) -> usize {
    let (k, l) = structure.dims();
    let cap = k.min(l);
    let base = if structure.gramian_factor().is_some() {
        8
    } else {
        let sv = singular_values(g0);
        let tol = 1e-10 * sv.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        let numerical = sv.iter().filter(|&&s| s > tol).count();
        (numerical + 2).min(16)
    };
    base.clamp(1, cap.max(1))
}

/// Result of the factored flow: the usual flow result (with `e` the lifted
/// full matrix) plus the final factor.
#[derive(Debug, Clone)]
pub struct LowRankFlowResult {
    pub result: FlowResult,
    pub factor: RankRFactor,
}

/// Rank-r analogue of [`crate::flow::integrate_to_stationary`]: same
/// stepsize control and acceptance test, with the update taken by the
/// projector-splitting integrator and the residual measured after tangent
/// projection.
pub fn integrate_low_rank_to_stationary(
    sys: &StateSpaceSystem,
    structure: &PerturbationStructure,
    eps: f64,
    factor0: &RankRFactor,
    config: &FlowConfig,
) -> Result<LowRankFlowResult, LowRankError> {
    let mut stats = FlowStats::default();
    let mut factor = factor0.clone();
    let mut e = factor.to_full();
    let mut bundle = free_gradient(sys, structure, eps, &e, &config.thresholds, None, None)?;
    stats.full_solves += 1;
    let mut trace: Vec<InnerTraceRow> = Vec::new();
    let mut rho = config.rho0;
    let mut converged = false;
    let mut floor_limited = false;
    let mut stalled_nonsmooth = false;
    let mut on_axis_exit = false;
    let mut residual = 0.0;
    let mut step = 0;
    let low_phi_budget = 200.min(config.max_steps);

    loop {
        if config.early_stop_on_axis && bundle.triple.imaginary {
            on_axis_exit = true;
            break;
        }
        if let Some(floor) = config.early_stop_phi_below {
            if bundle.phi < floor && step >= low_phi_budget {
                break;
            }
        }
        let rhs = constrained_rhs(&bundle, &e, config);
        let projected = tangent_project(&factor, &rhs.edot);
        residual = projected.norm();
        let gnorm = bundle.g.norm();
        if residual <= config.stall_tol * gnorm.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        if step >= config.max_steps {
            break;
        }
        if step > 0 && step % 10 == 0 {
            if let Ok(fresh) = free_gradient(sys, structure, eps, &e, &config.thresholds, None, None) {
                stats.full_solves += 1;
                bundle = fresh;
                if config.early_stop_on_axis && bundle.triple.imaginary {
                    on_axis_exit = true;
                    break;
                }
            }
        }
        if step > 0 && step % 100 == 0 && factor.orthonormality_defect() > 1e-10 {
            factor.reorthonormalize();
            e = factor.to_full();
        }

        // Signed flow field including penalty terms; the norm constraint is
        // enforced by the substep renormalizations instead of a multiplier.
        let field = config.direction.sign() * &bundle.g
            - match config.constraint_mode {
                crate::flow::ConstraintMode::None => DMatrix::zeros(e.nrows(), e.ncols()),
                _ => {
                    config.thresholds.c_a * &bundle.g_a + config.thresholds.c_d * &bundle.g_d
                }
            };

        let mut h = rho;
        let mut reduced = false;
        loop {
            let factor_try = match splitting_step_field(&factor, &field, h) {
                Ok(f) => f,
                Err(LowRankError::RankDeficientQR) => {
                    stats.rejected += 1;
                    h /= config.gamma;
                    reduced = true;
                    if h < 1e-14 {
                        stalled_nonsmooth = true;
                        break;
                    }
                    continue;
                }
                Err(other) => return Err(other),
            };
            let e_try = factor_try.to_full();
            stats.warm_attempts += 1;
            let bundle_try = match free_gradient(
                sys,
                structure,
                eps,
                &e_try,
                &config.thresholds,
                Some(bundle.triple.lambda),
                Some(&bundle.triple),
            ) {
                Ok(b) => b,
                Err(GradientError::SingularR)
                | Err(GradientError::SingularT)
                | Err(GradientError::PerturbedDefinitenessViolation { .. })
                | Err(GradientError::Eigen(_)) => {
                    stats.rejected += 1;
                    h /= config.gamma;
                    reduced = true;
                    if h < 1e-14 {
                        stalled_nonsmooth = true;
                        break;
                    }
                    continue;
                }
                Err(other) => return Err(other.into()),
            };
            if bundle_try.triple.warm {
                stats.warm_accepted += 1;
            } else {
                stats.full_solves += 1;
            }
            let improvement = acceptance_metric(&bundle_try, config) - acceptance_metric(&bundle, config);
            let accepted = improvement > 1e-14 * (1.0 + bundle.phi.abs());
            if config.record_trace {
                trace.push(InnerTraceRow {
                    step,
                    h,
                    accepted,
                    improvement,
                    phi: bundle_try.phi,
                    g_norm: gnorm,
                    mu: rhs.mu,
                    margin_a: bundle.margins.0,
                    margin_d: bundle.margins.1,
                    rank: Some(factor.rank()),
                });
            }
            if accepted {
                factor = factor_try;
                e = e_try;
                bundle = bundle_try;
                stats.accepted += 1;
                rho = if reduced { config.gamma * h } else { config.gamma * rho };
                break;
            }
            stats.rejected += 1;
            h /= config.gamma;
            reduced = true;
            if h < 1e-14 {
                if residual <= 1e-3 * gnorm.max(f64::MIN_POSITIVE) {
                    converged = true;
                    floor_limited = true;
                } else {
                    stalled_nonsmooth = true;
                }
                break;
            }
        }
        if stalled_nonsmooth || floor_limited {
            break;
        }
        step += 1;
    }

    Ok(LowRankFlowResult {
        result: FlowResult {
            e,
            bundle,
            steps: step,
            stats,
            stationarity_residual: residual,
            converged,
            floor_limited,
            stalled_nonsmooth,
            on_axis_exit,
            trace,
        },
        factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{integrate_to_stationary, FlowDirection};
    use crate::linalg::frob_inner;
    use crate::system::fixtures::example2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_unit(rng: &mut ChaCha8Rng, k: usize, l: usize) -> DMatrix<f64> {
        let raw = DMatrix::from_fn(k, l, |_, _| rng.gen_range(-1.0..1.0));
        let n = raw.norm();
        raw / n
    }

    #[test]
    fn factor_roundtrip_and_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = rand_unit(&mut rng, 6, 4);
        let factor = RankRFactor::from_full(&e, 3).unwrap();
        assert!(factor.orthonormality_defect() < 1e-12);
        assert!((factor.s.norm() - 1.0).abs() < 1e-12);
        assert!((factor.to_full().norm() - 1.0).abs() < 1e-12);
        // Full rank reproduces the matrix exactly.
        let full = RankRFactor::from_full(&e, 4).unwrap();
        assert!((full.to_full() - &e).norm() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_self_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e = rand_unit(&mut rng, 6, 5);
        let factor = RankRFactor::from_full(&e, 2).unwrap();
        for _ in 0..20 {
            let g1 = rand_unit(&mut rng, 6, 5);
            let g2 = rand_unit(&mut rng, 6, 5);
            let pg1 = tangent_project(&factor, &g1);
            let ppg1 = tangent_project(&factor, &pg1);
            assert!((&ppg1 - &pg1).norm() <= 1e-12);
            let lhs = frob_inner(&pg1, &g2);
            let rhs = frob_inner(&g1, &tangent_project(&factor, &g2));
            assert!((lhs - rhs).abs() <= 1e-12);
        }
        // Matrices already of the form U A Vᵀ are unchanged.
        let a = DMatrix::from_fn(2, 2, |i, j| (i + 2 * j) as f64 - 1.0);
        let inside = &factor.u * &a * factor.v.transpose();
        assert!((tangent_project(&factor, &inside) - &inside).norm() < 1e-13);
    }

    #[test]
    fn zero_field_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let e = rand_unit(&mut rng, 5, 4);
        let factor = RankRFactor::from_full(&e, 2).unwrap();
        let g0 = DMatrix::zeros(5, 4);
        let next = splitting_step(&factor, &g0, 0.3, FlowDirection::Descent).unwrap();
        assert!((next.to_full() - factor.to_full()).norm() < 1e-12);
    }

    #[test]
    fn gradient_aligned_factor_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let e = rand_unit(&mut rng, 5, 4);
        let factor = RankRFactor::from_full(&e, 2).unwrap();
        // G proportional to E: the stationarity characterization.
        let g0 = 0.7 * factor.to_full();
        let next = splitting_step(&factor, &g0, 0.2, FlowDirection::Ascent).unwrap();
        assert!((next.to_full() - factor.to_full()).norm() < 1e-10);
    }

    #[test]
    fn full_rank_splitting_matches_projected_euler_to_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = 4;
        let l = 3;
        let e = rand_unit(&mut rng, k, l);
        let factor = RankRFactor::from_full(&e, l).unwrap();
        let e0 = factor.to_full();
        let g0 = rand_unit(&mut rng, k, l);
        let euler = |h: f64| {
            let mu = frob_inner(&g0, &e0);
            let step = &e0 - h * (&g0 - mu * &e0);
            let n = step.norm();
            step / n
        };
        let errs: Vec<f64> = [0.02, 0.01]
            .iter()
            .map(|&h| {
                let split = splitting_step(&factor, &g0, h, FlowDirection::Descent).unwrap();
                (split.to_full() - euler(h)).norm()
            })
            .collect();
        // O(h^2) agreement: halving h shrinks the gap by about 4.
        let ratio = errs[0] / errs[1].max(1e-300);
        assert!(
            (2.5..6.0).contains(&ratio),
            "expected second-order agreement, errors {errs:?} ratio {ratio}"
        );
    }

    #[test]
    fn rank_one_structure_matches_full_flow() {
        // Gramian structure on Example 2 has 1 x 3 coordinates, so every
        // direction is rank one and the manifolds coincide.
        let sys = example2();
        let structure = PerturbationStructure::gramian_weighted_c(&sys).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let (k, l) = structure.dims();
        let e0 = rand_unit(&mut rng, k, l);
        let mut config = FlowConfig::new(FlowDirection::Descent);
        config.max_steps = 1000;
        let full = integrate_to_stationary(&sys, &structure, 0.05, &e0, &config).unwrap();
        let factor0 = RankRFactor::from_full(&e0, 1).unwrap();
        let low = integrate_low_rank_to_stationary(&sys, &structure, 0.05, &factor0, &config)
            .unwrap();
        assert!(
            (full.phi() - low.result.phi()).abs() <= 1e-6,
            "full {} vs low-rank {}",
            full.phi(),
            low.result.phi()
        );
        // Lifted stationary point satisfies the full-rank residual too.
        let rhs = constrained_rhs(&low.result.bundle, &low.result.e, &config);
        assert!(rhs.edot.norm() <= 1e-3 * low.result.bundle.g.norm().max(1e-300));
    }

    #[test]
    fn default_rank_policy() {
        let sys = example2();
        let gram = PerturbationStructure::gramian_weighted_c(&sys).unwrap();
        let g_small = DMatrix::zeros(1, 3);
        // Gramian bound of 8 is clamped to min(k, l) = 1.
        assert_eq!(default_rank(&gram, &g_small), 1);
        let full = PerturbationStructure::full(3, 1, 1);
        let mut g = DMatrix::zeros(4, 4);
        g[(0, 0)] = 1.0;
        g[(1, 1)] = 0.5;
        assert_eq!(default_rank(&full, &g), 4);
    }
}
