//! Norm-constrained gradient flow over unit-Frobenius-norm perturbation
//! directions at fixed size `eps`, integrated to a stationary point by a
//! projected explicit Euler method with adaptive stepsize (accept only on
//! strict improvement in the flow direction, halve on rejection, grow after
//! clean steps). Optional penalty or multiplier terms keep the perturbed
//! state matrix stable and the feedthrough inside its validity region.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::gradient::{free_gradient, ConstraintThresholds, GradientBundle, GradientError};
use crate::linalg::frob_inner;
use crate::structure::PerturbationStructure;
use crate::system::StateSpaceSystem;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Gradient(#[from] GradientError),
    #[error("initial direction has zero norm")]
    ZeroInitialDirection,
}

/// Ascent maximizes `Re lambda` (pushing eigenvalues away from the axis),
/// descent minimizes it (pulling them toward the axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDirection {
    Ascent,
    Descent,
}

impl FlowDirection {
    pub fn sign(self) -> f64 {
        match self {
            FlowDirection::Ascent => 1.0,
            FlowDirection::Descent => -1.0,
        }
    }
}

/// How the stability/feedthrough constraints enter the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    /// Plain norm-constrained gradient flow.
    None,
    /// Penalty terms `-c_A gA - c_D gD` added to the flow direction.
    Penalized,
    /// KKT multipliers chosen so active constraint values do not increase.
    Multiplier,
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub gamma: f64,
    pub rho0: f64,
    pub max_steps: usize,
    pub stall_tol: f64,
    pub constraint_mode: ConstraintMode,
    pub direction: FlowDirection,
    pub thresholds: ConstraintThresholds,
    /// Stop as soon as the target eigenvalue is classified imaginary
    /// (the flow cannot move it off the axis locally).
    pub early_stop_on_axis: bool,
    /// Abort a run that stays below this `phi` after a generous step
    /// budget; the outer iteration only needs `f` located relative to its
    /// threshold. `None` disables the guard.
    pub early_stop_phi_below: Option<f64>,
    /// When set, integrate on the rank-r manifold (factored direction and
    /// projector-splitting steps) instead of the full coordinate space.
    pub rank: Option<usize>,
    pub record_trace: bool,
}

impl FlowConfig {
    pub fn new(direction: FlowDirection) -> Self {
        Self {
            gamma: 2.0,
            rho0: 0.1,
            max_steps: 2000,
            stall_tol: 1e-7,
            constraint_mode: ConstraintMode::None,
            direction,
            thresholds: ConstraintThresholds::default(),
            early_stop_on_axis: true,
            early_stop_phi_below: None,
            rank: None,
            record_trace: false,
        }
    }
}

/// One attempted inner step, accepted or not.
#[derive(Debug, Clone)]
pub struct InnerTraceRow {
    pub step: usize,
    pub h: f64,
    pub accepted: bool,
    /// Acceptance-metric gain of this attempt; strictly positive on every
    /// accepted step (raw `phi` is only piecewise monotone across warm
    /// re-anchors when an eigenvalue branch swap is detected).
    pub improvement: f64,
    pub phi: f64,
    pub g_norm: f64,
    pub mu: f64,
    pub margin_a: f64,
    pub margin_d: f64,
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct FlowStats {
    pub accepted: usize,
    pub rejected: usize,
    pub warm_attempts: usize,
    pub warm_accepted: usize,
    pub full_solves: usize,
    pub branch_reanchors: usize,
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub e: DMatrix<f64>,
    pub bundle: GradientBundle,
    pub steps: usize,
    pub stats: FlowStats,
    /// `||Edot||_F` at exit (absolute).
    pub stationarity_residual: f64,
    pub converged: bool,
    /// Convergence was declared because the stepsize underflowed while the
    /// acceptance floor blocked further (representable) improvement, with a
    /// residual still above `stall_tol`; `phi` is converged to rounding
    /// level there even though the direction is not.
    pub floor_limited: bool,
    /// Stepsize underflowed with a non-stationary residual.
    pub stalled_nonsmooth: bool,
    /// Exited because the target eigenvalue was classified imaginary.
    pub on_axis_exit: bool,
    pub trace: Vec<InnerTraceRow>,
}

impl FlowResult {
    /// `phi` of the final iterate (exact zero on axis exit).
    pub fn phi(&self) -> f64 {
        self.bundle.phi
    }
}

/// Right-hand side of the constrained flow with its multipliers.
#[derive(Debug, Clone)]
pub struct RhsInfo {
    pub edot: DMatrix<f64>,
    pub mu: f64,
    pub mu_a: f64,
    pub mu_d: f64,
    pub degenerate_kkt: bool,
}

fn project_tangent(v: &DMatrix<f64>, e: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let mu = frob_inner(v, e);
    (v - mu * e, mu)
}

/// Assembles `Edot` for the configured constraint mode. In all modes the
/// Lagrange multiplier on the norm constraint keeps `<E, Edot> = 0`.
pub fn constrained_rhs(
    bundle: &GradientBundle,
    e: &DMatrix<f64>,
    config: &FlowConfig,
) -> RhsInfo {
    let sign = config.direction.sign();
    let base = sign * &bundle.g;
    let has_penalties = bundle.g_a.norm() > 0.0 || bundle.g_d.norm() > 0.0;
    match config.constraint_mode {
        ConstraintMode::None => {
            let (edot, mu) = project_tangent(&base, e);
            RhsInfo {
                edot,
                mu,
                mu_a: 0.0,
                mu_d: 0.0,
                degenerate_kkt: false,
            }
        }
        ConstraintMode::Penalized => {
            let v = &base
                - config.thresholds.c_a * &bundle.g_a
                - config.thresholds.c_d * &bundle.g_d;
            let (edot, mu) = project_tangent(&v, e);
            RhsInfo {
                edot,
                mu,
                mu_a: config.thresholds.c_a,
                mu_d: config.thresholds.c_d,
                degenerate_kkt: false,
            }
        }
        ConstraintMode::Multiplier => {
            if !has_penalties {
                let (edot, mu) = project_tangent(&base, e);
                return RhsInfo {
                    edot,
                    mu,
                    mu_a: 0.0,
                    mu_d: 0.0,
                    degenerate_kkt: false,
                };
            }
            multiplier_rhs(bundle, e, &base)
        }
    }
}

/// Active-set solve of the at-most-2 dimensional KKT system so that
/// `<E, Edot> = 0` and `<g_X, Edot> = 0` for active constraints with
/// nonnegative multipliers.
fn multiplier_rhs(bundle: &GradientBundle, e: &DMatrix<f64>, base: &DMatrix<f64>) -> RhsInfo {
    let (pb, _) = project_tangent(base, e);
    let (pa, _) = project_tangent(&bundle.g_a, e);
    let (pd, _) = project_tangent(&bundle.g_d, e);
    let mut active_a = bundle.g_a.norm() > 0.0;
    let mut active_d = bundle.g_d.norm() > 0.0;
    let mut degenerate = false;
    let (mut mu_a, mut mu_d);
    loop {
        match (active_a, active_d) {
            (true, true) => {
                let gaa = frob_inner(&pa, &pa);
                let gad = frob_inner(&pa, &pd);
                let gdd = frob_inner(&pd, &pd);
                let det = gaa * gdd - gad * gad;
                if det.abs() <= 1e-14 * (gaa * gdd).max(1e-300) {
                    // Gram matrix singular: drop the feedthrough constraint.
                    degenerate = true;
                    active_d = false;
                    continue;
                }
                let ra = frob_inner(&pa, &pb);
                let rd = frob_inner(&pd, &pb);
                mu_a = (gdd * ra - gad * rd) / det;
                mu_d = (gaa * rd - gad * ra) / det;
                if mu_a < 0.0 {
                    active_a = false;
                    continue;
                }
                if mu_d < 0.0 {
                    active_d = false;
                    continue;
                }
            }
            (true, false) => {
                let gaa = frob_inner(&pa, &pa);
                mu_a = if gaa > 0.0 { frob_inner(&pa, &pb) / gaa } else { 0.0 };
                mu_d = 0.0;
                if mu_a < 0.0 {
                    mu_a = 0.0;
                }
            }
            (false, true) => {
                let gdd = frob_inner(&pd, &pd);
                mu_d = if gdd > 0.0 { frob_inner(&pd, &pb) / gdd } else { 0.0 };
                mu_a = 0.0;
                if mu_d < 0.0 {
                    mu_d = 0.0;
                }
            }
            (false, false) => {
                mu_a = 0.0;
                mu_d = 0.0;
            }
        }
        break;
    }
    let v = base - mu_a * &bundle.g_a - mu_d * &bundle.g_d;
    let (edot, mu) = project_tangent(&v, e);
    RhsInfo {
        edot,
        mu,
        mu_a,
        mu_d,
        degenerate_kkt: degenerate,
    }
}

/// Acceptance metric: the quantity that must strictly improve across
/// accepted steps (`sign * phi` minus weighted penalties in penalized mode).
pub(crate) fn acceptance_metric(bundle: &GradientBundle, config: &FlowConfig) -> f64 {
    let sign = config.direction.sign();
    match config.constraint_mode {
        ConstraintMode::Penalized => {
            sign * bundle.phi
                - config.thresholds.c_a * bundle.phi_a
                - config.thresholds.c_d * bundle.phi_d
        }
        _ => sign * bundle.phi,
    }
}

fn normalize(e: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = e.norm();
    (n > 0.0).then(|| e / n)
}

/// Outcome of a single projected Euler trial at stepsize `h`.
#[derive(Debug)]
pub struct StepOutcome {
    pub accepted: bool,
    pub e_next: DMatrix<f64>,
    pub bundle_next: Option<GradientBundle>,
    pub improvement: f64,
}

/// One projected Euler trial: forms the renormalized update along the
/// constrained right-hand side, evaluates the perturbed Hamiltonian there
/// (warm-started) and accepts iff the acceptance metric strictly improves.
#[allow(clippy::too_many_arguments)]
pub fn euler_step(
    sys: &StateSpaceSystem,
    structure: &PerturbationStructure,
    eps: f64,
    e: &DMatrix<f64>,
    bundle: &GradientBundle,
    rhs: &RhsInfo,
    h: f64,
    config: &FlowConfig,
    warm: bool,
    stats: &mut FlowStats,
) -> Result<StepOutcome, FlowError> {
    let e_next = match normalize(&(e + h * &rhs.edot)) {
        Some(next) => next,
        None => {
            return Ok(StepOutcome {
                accepted: false,
                e_next: e.clone(),
                bundle_next: None,
                improvement: f64::NEG_INFINITY,
            })
        }
    };
    let (hint, prev) = if warm {
        (Some(bundle.triple.lambda), Some(&bundle.triple))
    } else {
        (None, None)
    };
    if warm {
        stats.warm_attempts += 1;
    }
    let bundle_next = match free_gradient(sys, structure, eps, &e_next, &config.thresholds, hint, prev)
    {
        Ok(b) => b,
        Err(GradientError::SingularR)
        | Err(GradientError::SingularT)
        | Err(GradientError::PerturbedDefinitenessViolation { .. })
        | Err(GradientError::Eigen(_)) => {
            // Trial point is unevaluable (formula singularity or a hard
            // eigenproblem near a coalescence): treat as rejected so the
            // stepsize control steers around it.
            return Ok(StepOutcome {
                accepted: false,
                e_next: e.clone(),
                bundle_next: None,
                improvement: f64::NEG_INFINITY,
            });
        }
        Err(other) => return Err(other.into()),
    };
    if warm && bundle_next.triple.warm {
        stats.warm_accepted += 1;
    }
    if !bundle_next.triple.warm {
        stats.full_solves += 1;
    }
    let cur = acceptance_metric(bundle, config);
    let next = acceptance_metric(&bundle_next, config);
    let improvement = next - cur;
    let floor = 1e-14 * (1.0 + bundle.phi.abs());
    Ok(StepOutcome {
        accepted: improvement > floor,
        e_next,
        bundle_next: Some(bundle_next),
        improvement,
    })
}

/// Integrates the constrained gradient flow at fixed `eps` until the
/// stationarity residual drops below `stall_tol * ||G||_F`, the step count
/// runs out, or an early-stop condition fires.
pub fn integrate_to_stationary(
    sys: &StateSpaceSystem,
    structure: &PerturbationStructure,
    eps: f64,
    e0: &DMatrix<f64>,
    config: &FlowConfig,
) -> Result<FlowResult, FlowError> {
    let mut stats = FlowStats::default();
    let mut e = normalize(e0).ok_or(FlowError::ZeroInitialDirection)?;
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
    // Steps allowed below the phi floor before giving up on this eps.
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
        residual = rhs.edot.norm();
        let gnorm = bundle.g.norm();
        if residual <= config.stall_tol * gnorm.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        if step >= config.max_steps {
            break;
        }

        // Re-anchor with a full solve every tenth step; a branch swap in
        // the warm tracking is corrected here without rejecting the step.
        if step > 0 && step % 10 == 0 {
            // A failed re-anchor keeps the warm bundle; it will be retried.
            if let Ok(fresh) = free_gradient(sys, structure, eps, &e, &config.thresholds, None, None) {
                stats.full_solves += 1;
                let drift = (fresh.triple.lambda.re - bundle.triple.lambda.re).abs();
                if drift > 0.1 * fresh.triple.lambda.re.abs().max(1e-300) {
                    stats.branch_reanchors += 1;
                }
                bundle = fresh;
                if config.early_stop_on_axis && bundle.triple.imaginary {
                    on_axis_exit = true;
                    break;
                }
            }
        }

        let mut h = rho;
        let mut reduced = false;
        loop {
            let outcome = euler_step(
                sys, structure, eps, &e, &bundle, &rhs, h, config, true, &mut stats,
            )?;
            if config.record_trace {
                let phi_row = outcome
                    .bundle_next
                    .as_ref()
                    .map(|b| b.phi)
                    .unwrap_or(bundle.phi);
                trace.push(InnerTraceRow {
                    step,
                    h,
                    accepted: outcome.accepted,
                    improvement: outcome.improvement,
                    phi: phi_row,
                    g_norm: gnorm,
                    mu: rhs.mu,
                    margin_a: bundle.margins.0,
                    margin_d: bundle.margins.1,
                    rank: None,
                });
            }
            if outcome.accepted {
                e = outcome.e_next;
                bundle = outcome.bundle_next.expect("accepted step carries a bundle");
                stats.accepted += 1;
                rho = if reduced { config.gamma * h } else { config.gamma * rho };
                break;
            }
            stats.rejected += 1;
            h /= config.gamma;
            reduced = true;
            if h < 1e-14 {
                // No representable step improves the metric. With a small
                // residual this is stationarity at working precision; with
                // a large one the point is genuinely nonsmooth.
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

    Ok(FlowResult {
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
    })
}
