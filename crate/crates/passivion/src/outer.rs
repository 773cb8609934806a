//! Outer iteration over the perturbation size: solve `f(eps) = delta` where
//! `f(eps)` is the optimal eigenvalue real part returned by a converged
//! inner flow at size `eps`. Two scalar schemes are provided: a safeguarded
//! Newton/bisection iteration and, for very small `delta`, an iteration
//! built on the square-root model `f ~ gamma sqrt(+-(eps - eps_hat))` of a
//! defective coalescence. Enforcement approaches the root from above
//! (ascent inner flow, `f` increasing in `eps`), the radius computation
//! from below (descent inner flow, `f` decreasing).

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::eigen;
use crate::flow::{integrate_to_stationary, FlowConfig, FlowDirection, FlowError, FlowResult, InnerTraceRow};
use crate::lowrank::{integrate_low_rank_to_stationary, RankRFactor};
use crate::gradient::{free_gradient, GradientError};
use crate::structure::PerturbationStructure;
use crate::system::{hamiltonian_of_blocks, StateSpaceSystem, SystemBlocks};

#[derive(Debug, Error)]
pub enum OuterError {
    #[error("initial point is not feasible for the outer iteration: {reason}")]
    InitialNotFeasible { reason: String },
    #[error("initializer failed: {reason}")]
    InitializationFailed { reason: String },
    #[error("least-squares fit is ill conditioned or under-determined")]
    IllConditionedFit,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Gradient(#[from] GradientError),
    #[error(transparent)]
    Eigen(#[from] eigen::EigenError),
    #[error("{0}")]
    Structure(#[from] crate::structure::StructureError),
    #[error("{0}")]
    System(#[from] crate::system::SystemError),
}

/// Which of the two size-optimization problems is being solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    /// Passivity enforcement: shrink `eps` from a feasible start until the
    /// optimal margin equals `delta` (inner ascent, `f` increasing).
    Enforce,
    /// Distance to non-passivity: grow `eps` from zero until the minimized
    /// margin equals `delta` (inner descent, `f` decreasing).
    Radius,
}

impl Problem {
    pub fn flow_direction(self) -> FlowDirection {
        match self {
            Problem::Enforce => FlowDirection::Ascent,
            Problem::Radius => FlowDirection::Descent,
        }
    }

    /// Sign of `f'(eps) = +-kappa ||G||_F`.
    fn fprime_sign(self) -> f64 {
        match self {
            Problem::Enforce => 1.0,
            Problem::Radius => -1.0,
        }
    }

    /// Direction of the fixed-size initialization step away from `eps0`.
    fn init_step_sign(self) -> f64 {
        match self {
            Problem::Enforce => -1.0,
            Problem::Radius => 1.0,
        }
    }

    /// Sign of the `delta^2 / gamma^2` offset past the estimated
    /// coalescence size in the square-root model.
    fn sqrt_offset_sign(self) -> f64 {
        match self {
            Problem::Enforce => 1.0,
            Problem::Radius => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterMode {
    NewtonBisection,
    SqrtModel,
}

#[derive(Debug, Clone)]
pub struct OuterConfig {
    pub delta: f64,
    pub tol: f64,
    pub k_max: usize,
    pub mode: OuterMode,
    /// Backtracking factor of the square-root iteration.
    pub theta: f64,
    pub problem: Problem,
}

impl OuterConfig {
    pub fn new(problem: Problem, delta: f64) -> Self {
        Self {
            delta,
            tol: (1e-6 * (1.0 + delta)).min(0.5 * delta),
            k_max: 50,
            mode: OuterMode::NewtonBisection,
            theta: 0.8,
            problem,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Init,
    Newton,
    Bisection,
    SqrtModel,
    Reject,
}

impl StepKind {
    pub fn label(self) -> &'static str {
        match self {
            StepKind::Init => "init",
            StepKind::Newton => "newton",
            StepKind::Bisection => "bisection",
            StepKind::SqrtModel => "sqrt-model",
            StepKind::Reject => "reject",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OuterTraceRow {
    pub k: usize,
    pub kind: StepKind,
    pub f: f64,
    pub eps: f64,
    pub eps_lb: f64,
    pub eps_ub: f64,
    pub fprime: f64,
}

#[derive(Debug, Clone, Default)]
pub struct OuterTrace {
    pub rows: Vec<OuterTraceRow>,
}

/// Final state of an outer run. `eps_hat_delta` is the accepted size with
/// `|f - delta| <= tol` (or the best achieved when flagged unconverged);
/// `eps_hat_bracket` encloses the coalescence size itself.
#[derive(Debug, Clone)]
pub struct PassivationResult {
    pub eps_hat_delta: f64,
    pub e_final: DMatrix<f64>,
    pub final_blocks: SystemBlocks,
    pub lambda_final: Complex64,
    pub f_final: f64,
    pub fprime_final: f64,
    pub trace: OuterTrace,
    pub eps_hat_bracket: (f64, f64),
    pub norm_dz: f64,
    pub norm_ldz: f64,
    pub converged: bool,
    pub final_flow: FlowResult,
    /// Per-evaluation inner traces `(outer k, eps, rows)`; populated when
    /// the flow records traces.
    pub inner_traces: Vec<(usize, f64, Vec<InnerTraceRow>)>,
}

/// Runs the inner flow at size `eps` from `e_warm` and returns
/// `(f, f', flow)`: `f` is the converged `phi` (exact zero on axis) and
/// `f' = +-kappa ||G||_F` with the problem's sign.
pub fn f_and_fprime(
    sys: &StateSpaceSystem,
    structure: &PerturbationStructure,
    eps: f64,
    e_warm: &DMatrix<f64>,
    flow_config: &FlowConfig,
    problem: Problem,
) -> Result<(f64, f64, FlowResult), OuterError> {
    if eps == 0.0 {
        // phi is independent of E at eps = 0; a single evaluation suffices.
        let bundle = free_gradient(
            sys,
            structure,
            0.0,
            e_warm,
            &flow_config.thresholds,
            None,
            None,
        )?;
        let f = bundle.phi;
        let fprime = derivative_from_bundle(&bundle, problem);
        let flow = FlowResult {
            e: e_warm.clone(),
            bundle,
            steps: 0,
            stats: Default::default(),
            stationarity_residual: 0.0,
            converged: true,
            floor_limited: false,
            stalled_nonsmooth: false,
            on_axis_exit: false,
            trace: Vec::new(),
        };
        return Ok((f, fprime, flow));
    }
    let mut config = flow_config.clone();
    config.direction = problem.flow_direction();
    let flow = match config.rank {
        Some(r) => {
            let factor0 = RankRFactor::from_full(e_warm, r)
                .map_err(|e| OuterError::InitializationFailed { reason: e.to_string() })?;
            integrate_low_rank_to_stationary(sys, structure, eps, &factor0, &config)
                .map_err(|e| OuterError::InitializationFailed { reason: e.to_string() })?
                .result
        }
        None => integrate_to_stationary(sys, structure, eps, e_warm, &config)?,
    };
    let f = flow.phi();
    let fprime = if f == 0.0 {
        0.0
    } else {
        derivative_from_bundle(&flow.bundle, problem)
    };
    Ok((f, fprime, flow))
}

fn derivative_from_bundle(bundle: &crate::gradient::GradientBundle, problem: Problem) -> f64 {
    let value = bundle.triple.kappa * bundle.g.norm();
    if value.is_finite() {
        problem.fprime_sign() * value
    } else {
        0.0
    }
}

/// Bracket bookkeeping for `eps_hat_delta` (`lb`/`ub`) and for the
/// coalescence size itself.
#[derive(Debug, Clone)]
struct Bounds {
    lb: f64,
    ub: f64,
    coalesce_lo: f64,
    coalesce_hi: f64,
}

impl Bounds {
    fn new() -> Self {
        Self {
            lb: 0.0,
            ub: f64::INFINITY,
            coalesce_lo: 0.0,
            coalesce_hi: f64::INFINITY,
        }
    }

    fn update(&mut self, problem: Problem, delta: f64, eps: f64, f: f64) {
        // Updates that would cross the bracket (possible when local optima
        // make the sampled f non-monotone) are skipped, keeping
        // lb <= ub at every trace row.
        let raise_lb = |b: &mut Self, eps: f64| {
            if eps <= b.ub {
                b.lb = b.lb.max(eps);
            }
        };
        let lower_ub = |b: &mut Self, eps: f64| {
            if eps >= b.lb {
                b.ub = b.ub.min(eps);
            }
        };
        match problem {
            Problem::Enforce => {
                // f increasing in eps; root approached from above.
                if f >= delta {
                    lower_ub(self, eps);
                } else {
                    raise_lb(self, eps);
                }
                if f == 0.0 {
                    if eps <= self.coalesce_hi {
                        self.coalesce_lo = self.coalesce_lo.max(eps);
                    }
                } else if eps >= self.coalesce_lo {
                    self.coalesce_hi = self.coalesce_hi.min(eps);
                }
            }
            Problem::Radius => {
                // f decreasing in eps; root approached from below.
                if f > delta {
                    raise_lb(self, eps);
                } else {
                    lower_ub(self, eps);
                }
                if f == 0.0 {
                    if eps >= self.coalesce_lo {
                        self.coalesce_hi = self.coalesce_hi.min(eps);
                    }
                } else if eps <= self.coalesce_hi {
                    self.coalesce_lo = self.coalesce_lo.max(eps);
                }
            }
        }
    }

    fn bisect(&self, fallback_from: f64) -> (f64, StepKind) {
        if self.ub.is_finite() && self.lb < self.ub {
            ((self.lb + self.ub) / 2.0, StepKind::Bisection)
        } else {
            // One-sided so far: expand geometrically.
            ((2.0 * fallback_from.max(self.lb)).max(1e-8), StepKind::Bisection)
        }
    }
}

/// Generic Newton/bisection driver over a scalar oracle. The oracle is
/// called once per iterate and returns `(f, f')` with the problem's signed
/// derivative; `f == 0` marks coalescence (bisection branch).
fn newton_bisection_core<F>(
    mut eval: F,
    config: &OuterConfig,
    eps0: f64,
) -> Result<(OuterTrace, Bounds, usize, bool), OuterError>
where
    F: FnMut(usize, f64, StepKind) -> Result<(f64, f64), OuterError>,
{
    let mut trace = OuterTrace::default();
    let mut bounds = Bounds::new();
    let problem = config.problem;
    let delta = config.delta;
    let mut best_k = 0usize;
    let mut best_gap = f64::INFINITY;
    let mut converged = false;

    let push = |trace: &mut OuterTrace,
                    bounds: &mut Bounds,
                    k: usize,
                    kind: StepKind,
                    eps: f64,
                    f: f64,
                    fp: f64| {
        bounds.update(problem, delta, eps, f);
        trace.rows.push(OuterTraceRow {
            k,
            kind,
            f,
            eps,
            eps_lb: bounds.lb,
            eps_ub: bounds.ub,
            fprime: fp,
        });
    };

    let (f0, fp0) = eval(0, eps0, StepKind::Init)?;
    push(&mut trace, &mut bounds, 0, StepKind::Init, eps0, f0, fp0);
    if f0 > 0.0 {
        best_gap = (f0 - delta).abs();
    }
    if f0 > 0.0 && (f0 - delta).abs() <= config.tol {
        return Ok((trace, bounds, 0, true));
    }

    // Fixed-size warm-up step: gives the Newton iteration a second point
    // with an already-optimized direction.
    let mut eps_prev = (eps0 + problem.init_step_sign() * delta).max(eps0 / 2.0).max(0.0);
    if eps_prev == eps0 {
        eps_prev = eps0 + problem.init_step_sign() * 0.5 * eps0;
    }
    let (mut f_prev, mut fp_prev) = eval(1, eps_prev, StepKind::Init)?;
    push(
        &mut trace, &mut bounds, 1, StepKind::Init, eps_prev, f_prev, fp_prev,
    );
    if f_prev > 0.0 && (f_prev - delta).abs() < best_gap {
        best_gap = (f_prev - delta).abs();
        best_k = 1;
    }
    if f_prev > 0.0 && (f_prev - delta).abs() <= config.tol {
        return Ok((trace, bounds, 1, true));
    }

    for k in 2..=config.k_max {
        let newton_allowed = match problem {
            // The radius iteration only trusts Newton from the f > delta
            // side; past the root it bisects (matching the reference
            // behaviour of the mixed iteration).
            Problem::Radius => f_prev > delta,
            Problem::Enforce => f_prev > 0.0,
        };
        let (mut eps_next, mut kind) = if newton_allowed && fp_prev != 0.0 && fp_prev.is_finite() {
            (eps_prev - (f_prev - delta) / fp_prev, StepKind::Newton)
        } else {
            bounds.bisect(eps_prev)
        };
        let inside = eps_next.is_finite()
            && eps_next > bounds.lb.max(0.0)
            && (!bounds.ub.is_finite() || eps_next < bounds.ub);
        if kind == StepKind::Newton && !inside {
            let (e, k2) = bounds.bisect(eps_prev);
            eps_next = e;
            kind = k2;
        }
        let (f_next, fp_next) = eval(k, eps_next, kind)?;
        push(&mut trace, &mut bounds, k, kind, eps_next, f_next, fp_next);
        if f_next > 0.0 && (f_next - delta).abs() < best_gap {
            best_gap = (f_next - delta).abs();
            best_k = k;
        }
        if f_next > 0.0 && (f_next - delta).abs() <= config.tol {
            converged = true;
            break;
        }
        if f_next > 0.0 && f_prev > 0.0 && (f_next - f_prev).abs() < config.tol {
            // Stalled: successive optimized values indistinguishable.
            break;
        }
        eps_prev = eps_next;
        f_prev = f_next;
        fp_prev = fp_next;
    }
    Ok((trace, bounds, best_k, converged))
}

/// Generic square-root-model driver (for small `delta`), same oracle
/// contract as [`newton_bisection_core`]. Rejected iterates (`f < tol`,
/// i.e. past the coalescence) backtrack geometrically toward the last
/// trusted size.
fn sqrt_model_core<F>(
    mut eval: F,
    config: &OuterConfig,
    eps0: f64,
) -> Result<(OuterTrace, Bounds, usize, bool), OuterError>
where
    F: FnMut(usize, f64, StepKind) -> Result<(f64, f64), OuterError>,
{
    let mut trace = OuterTrace::default();
    let mut bounds = Bounds::new();
    let problem = config.problem;
    let delta = config.delta;
    let mut best_k = 0usize;
    let mut converged = false;

    let (mut f_prev, mut fp_prev) = eval(0, eps0, StepKind::Init)?;
    bounds.update(problem, delta, eps0, f_prev);
    trace.rows.push(OuterTraceRow {
        k: 0,
        kind: StepKind::Init,
        f: f_prev,
        eps: eps0,
        eps_lb: bounds.lb,
        eps_ub: bounds.ub,
        fprime: fp_prev,
    });
    if f_prev <= config.tol {
        return Err(OuterError::InitialNotFeasible {
            reason: format!("f(eps0) = {f_prev:.3e} must exceed tol for the sqrt-model iteration"),
        });
    }
    let mut best_gap = (f_prev - delta).abs();
    if best_gap <= config.tol {
        return Ok((trace, bounds, 0, true));
    }

    let mut eps_prev = eps0;
    let mut eps_trusted = eps0;
    let mut theta_cur = config.theta;
    let mut reject = false;

    for k in 1..=config.k_max {
        let (eps_next, kind) = if !reject {
            eps_trusted = eps_prev;
            theta_cur = config.theta;
            let gamma_sq = 2.0 * f_prev * fp_prev.abs();
            let eps_hat = eps_prev - f_prev / (2.0 * fp_prev);
            let off = problem.sqrt_offset_sign() * delta * delta / gamma_sq.max(1e-300);
            ((eps_hat + off).max(0.0), StepKind::SqrtModel)
        } else {
            let eps = theta_cur * eps_prev + (1.0 - theta_cur) * eps_trusted;
            theta_cur *= config.theta;
            (eps, StepKind::Reject)
        };
        let (f_next, fp_next) = eval(k, eps_next, kind)?;
        bounds.update(problem, delta, eps_next, f_next);
        trace.rows.push(OuterTraceRow {
            k,
            kind,
            f: f_next,
            eps: eps_next,
            eps_lb: bounds.lb,
            eps_ub: bounds.ub,
            fprime: fp_next,
        });
        reject = f_next < config.tol;
        if !reject {
            if (f_next - delta).abs() < best_gap {
                best_gap = (f_next - delta).abs();
                best_k = k;
            }
            if (f_next - delta).abs() <= config.tol {
                converged = true;
                break;
            }
        }
        eps_prev = eps_next;
        f_prev = f_next;
        fp_prev = fp_next;
    }
    Ok((trace, bounds, best_k, converged))
}

/// Stored state of one outer evaluation, kept so the best iterate can be
/// reconstructed after the scalar iteration finishes.
struct EvalRecord {
    eps: f64,
    f: f64,
    fprime: f64,
    flow: FlowResult,
}

struct FlowOracle<'a> {
    sys: &'a StateSpaceSystem,
    structure: &'a PerturbationStructure,
    flow_config: FlowConfig,
    problem: Problem,
    e_warm: DMatrix<f64>,
    /// Last direction that produced a strictly positive margin; the most
    /// reliable probe when a warm start lands axis-stuck.
    e_feasible: Option<DMatrix<f64>>,
    /// All `(eps, direction)` pairs with positive margin, for continuation.
    feasible_records: Vec<(f64, DMatrix<f64>)>,
    records: Vec<EvalRecord>,
    probe_counter: u64,
}

impl<'a> FlowOracle<'a> {
    fn eval(&mut self, eps: f64) -> Result<(f64, f64), OuterError> {
        let (mut f, mut fp, mut flow) = f_and_fprime(
            self.sys,
            self.structure,
            eps,
            &self.e_warm,
            &self.flow_config,
            self.problem,
        )?;
        // An ascent that ends on the axis may simply have been handed (or
        // warm-tracked into) an axis-stuck direction; the zero says nothing
        // about the maximized f at this size. Probe before trusting it.
        // (For the descent problem a zero is genuine: any direction
        // reaching the axis certifies the minimum.)
        if self.problem == Problem::Enforce && f == 0.0 && flow.on_axis_exit && eps > 0.0 {
            // Continuation first: re-enter the feasible cone by walking
            // from the nearest feasible record through an intermediate
            // size, then fall back to fresh random directions.
            if let Some((pf, pfp, pflow)) = self.continuation_probe(eps) {
                f = pf;
                fp = pfp;
                flow = pflow;
            }
            if f == 0.0 {
                let (k, l) = self.structure.dims();
                for _ in 0..3 {
                    self.probe_counter += 1;
                    let probe = probe_direction(self.probe_counter, k, l);
                    if let Ok((pf, pfp, pflow)) = f_and_fprime(
                        self.sys,
                        self.structure,
                        eps,
                        &probe,
                        &self.flow_config,
                        self.problem,
                    ) {
                        if pf > 0.0 {
                            f = pf;
                            fp = pfp;
                            flow = pflow;
                            break;
                        }
                    }
                }
            }
        }
        if f > 0.0 && eps > 0.0 {
            self.e_feasible = Some(flow.e.clone());
        }
        if f > 0.0 {
            self.feasible_records.push((eps, flow.e.clone()));
        }
        if eps == 0.0 {
            // Seed the next flow with the steepest direction at zero.
            let g = &flow.bundle.g;
            let gn = g.norm();
            if gn > 0.0 {
                self.e_warm = self.problem.flow_direction().sign() * g / gn;
            }
        } else {
            self.e_warm = flow.e.clone();
        }
        self.records.push(EvalRecord { eps, f, fprime: fp, flow });
        Ok((f, fp))
    }

    /// Walks from the feasible record nearest to `eps` toward `eps` along a
    /// geometric grid (ratio at most 1.25 per step), re-optimizing the
    /// direction at every stop: the feasible cone rotates with the size, so
    /// each stop must stay within the previous one's basin. Returns the
    /// result at `eps` if the walk arrives strictly feasible.
    fn continuation_probe(&mut self, eps: f64) -> Option<(f64, f64, FlowResult)> {
        let (eps_near, e_near) = self
            .feasible_records
            .iter()
            .filter(|(e, _)| *e > 0.0)
            .min_by(|a, b| {
                (a.0 - eps).abs().partial_cmp(&(b.0 - eps).abs()).unwrap()
            })
            .map(|(e, d)| (*e, d.clone()))?;
        if eps <= 0.0 || !eps.is_finite() {
            return None;
        }
        let log_ratio = (eps / eps_near).ln();
        let steps = ((log_ratio.abs() / 1.25f64.ln()).ceil() as usize).clamp(1, 12);
        let mut direction = e_near;
        let mut last: Option<(f64, f64, FlowResult)> = None;
        for i in 1..=steps {
            let stop = eps_near * (log_ratio * i as f64 / steps as f64).exp();
            match f_and_fprime(self.sys, self.structure, stop, &direction, &self.flow_config, self.problem)
            {
                Ok((pf, pfp, pflow)) => {
                    if pf > 0.0 {
                        direction = pflow.e.clone();
                        last = Some((pf, pfp, pflow));
                    } else if i == steps {
                        last = None;
                    }
                }
                Err(_) => return None,
            }
        }
        last.filter(|(pf, _, _)| *pf > 0.0)
    }

    fn into_result(
        mut self,
        trace: OuterTrace,
        bounds: Bounds,
        best_k: usize,
        converged: bool,
    ) -> Result<PassivationResult, OuterError> {
        // best_k indexes trace rows, which are in lockstep with records.
        let inner_traces: Vec<(usize, f64, Vec<InnerTraceRow>)> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.flow.trace.is_empty())
            .map(|(k, r)| (k, r.eps, r.flow.trace.clone()))
            .collect();
        let record = self.records.swap_remove(best_k.min(self.records.len() - 1));
        let dz = record.eps * &record.flow.e;
        let ldz = self.structure.apply(&dz)?;
        let final_blocks = SystemBlocks::from_block_matrix(
            &(self.sys.block_matrix() + &ldz),
            self.sys.state_dim(),
            self.sys.input_dim(),
            self.sys.output_dim(),
            self.sys.mode(),
        );
        Ok(PassivationResult {
            eps_hat_delta: record.eps,
            e_final: record.flow.e.clone(),
            final_blocks,
            lambda_final: record.flow.bundle.triple.lambda,
            f_final: record.f,
            fprime_final: record.fprime,
            trace,
            eps_hat_bracket: (bounds.coalesce_lo, bounds.coalesce_hi),
            norm_dz: dz.norm(),
            norm_ldz: ldz.norm(),
            converged,
            final_flow: record.flow,
            inner_traces,
        })
    }
}

/// Newton/bisection outer iteration backed by the inner gradient flow.
///
/// Preconditions: for `Enforce`, `f(eps0) > 0` (the initial perturbation is
/// already strictly passive); for `Radius`, the unperturbed system is
/// strictly passive and the iteration starts at `eps0` (usually zero).
pub fn newton_bisection(
    sys: &StateSpaceSystem,
    structure: &PerturbationStructure,
    eps0: f64,
    e0: &DMatrix<f64>,
    outer_config: &OuterConfig,
    flow_config: &FlowConfig,
) -> Result<PassivationResult, OuterError> {
    let mut oracle = FlowOracle {
        sys,
        structure,
        flow_config: flow_config.clone(),
        problem: outer_config.problem,
        e_warm: e0.clone(),
        e_feasible: None,
        feasible_records: Vec::new(),
        records: Vec::new(),
        probe_counter: 0,
    };
    let (trace, bounds, best_k, converged) = {
        let o = &mut oracle;
        newton_bisection_core(
            |k, eps, _kind| {
                let (f, fp) = o.eval(eps)?;
                if k == 0 {
                    validate_start(outer_config.problem, f, outer_config.delta)?;
                }
                Ok((f, fp))
            },
            outer_config,
            eps0,
        )?
    };
    oracle.into_result(trace, bounds, best_k, converged)
}

/// Square-root-model outer iteration for very small `delta`.
pub fn sqrt_model_iteration(
    sys: &StateSpaceSystem,
    structure: &PerturbationStructure,
    eps0: f64,
    e0: &DMatrix<f64>,
    outer_config: &OuterConfig,
    flow_config: &FlowConfig,
) -> Result<PassivationResult, OuterError> {
    let mut oracle = FlowOracle {
        sys,
        structure,
        flow_config: flow_config.clone(),
        problem: outer_config.problem,
        e_warm: e0.clone(),
        e_feasible: None,
        feasible_records: Vec::new(),
        records: Vec::new(),
        probe_counter: 0,
    };
    let (trace, bounds, best_k, converged) = {
        let o = &mut oracle;
        sqrt_model_core(|_k, eps, _kind| o.eval(eps), outer_config, eps0)?
    };
    oracle.into_result(trace, bounds, best_k, converged)
}

/// Deterministic quasi-random unit direction for degenerate-start probes.
fn probe_direction(counter: u64, k: usize, l: usize) -> DMatrix<f64> {
    let mut state = counter.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(0x2545f4914f6cdd1d);
    let mut next = move || {
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        let bits = state.wrapping_mul(0x2545f4914f6cdd1d);
        (bits >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let raw = DMatrix::from_fn(k, l, |_, _| next());
    let norm = raw.norm();
    if norm > 0.0 {
        raw / norm
    } else {
        DMatrix::from_element(k, l, 1.0 / ((k * l) as f64).sqrt())
    }
}

fn validate_start(problem: Problem, f0: f64, delta: f64) -> Result<(), OuterError> {
    match problem {
        Problem::Enforce => {
            if f0 <= 0.0 {
                return Err(OuterError::InitialNotFeasible {
                    reason: "initial perturbation is not strictly passive (f(eps0) = 0)".into(),
                });
            }
        }
        Problem::Radius => {
            if f0 <= delta {
                return Err(OuterError::InitialNotFeasible {
                    reason: format!(
                        "system must be strictly passive with margin above delta at eps0 (f = {f0:.3e})"
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Diagnostic least-squares fit of `f^2 = a eps + b` over sampled pairs,
/// reporting the square-root-model parameters and the relative residual.
/// `increasing` tells which regime the slope indicates.
#[derive(Debug, Clone)]
pub struct SqrtFit {
    pub gamma: f64,
    pub eps_hat: f64,
    pub residual: f64,
    pub increasing: bool,
}

pub fn sqrt_fit_diagnostic(samples: &[(f64, f64)]) -> Result<SqrtFit, OuterError> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(_, f)| *f > 0.0)
        .map(|&(e, f)| (e, f * f))
        .collect();
    if pts.len() < 3 {
        return Err(OuterError::IllConditionedFit);
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    let spread = sxx - sx * sx / n;
    if det.abs() <= 1e-14 * (n * sxx).max(1e-300) || spread <= 0.0 {
        return Err(OuterError::IllConditionedFit);
    }
    let a = (n * sxy - sx * sy) / det;
    let b = (sy * sxx - sx * sxy) / det;
    if a == 0.0 || !a.is_finite() {
        return Err(OuterError::IllConditionedFit);
    }
    let ss_res: f64 = pts
        .iter()
        .map(|&(x, y)| {
            let r = y - (a * x + b);
            r * r
        })
        .sum();
    let ss_tot: f64 = pts.iter().map(|&(_, y)| y * y).sum();
    Ok(SqrtFit {
        gamma: a.abs().sqrt(),
        eps_hat: -b / a,
        residual: (ss_res / ss_tot.max(1e-300)).sqrt(),
        increasing: a > 0.0,
    })
}

/// Produces a structure-feasible starting pair `(eps0, E0)` with
/// `f(eps0) > 0` for enforcement, by shrinking the C-block contribution
/// along the structure's range until the Hamiltonian loses its imaginary
/// eigenvalues, with a safety cushion on the resulting margin.
pub fn fallback_initializer(
    sys: &StateSpaceSystem,
    structure: &PerturbationStructure,
    delta: f64,
) -> Result<(f64, DMatrix<f64>), OuterError> {
    let ham = hamiltonian_of_blocks(&sys.blocks())?;
    let base = eigen::target_eigentriple(&ham, None)?;
    if !base.imaginary {
        return Err(OuterError::InitialNotFeasible {
            reason: format!(
                "system is already strictly passive (margin {:.3e}); nothing to enforce",
                base.lambda.re
            ),
        });
    }

    // Direction that cancels the C block, restricted to the structure.
    let (rows, cols) = structure.ambient_dims();
    let n = sys.state_dim();
    let p = sys.output_dim();
    let mut cancel_c = DMatrix::zeros(rows, cols);
    cancel_c
        .view_mut((n, 0), (p, n))
        .copy_from(&(-sys.c()));
    let dz_dir = structure
        .pullback(&cancel_c, 1e-8)
        .or_else(|_| structure.apply_adjoint(&cancel_c))?;
    if dz_dir.norm() == 0.0 {
        return Err(OuterError::InitializationFailed {
            reason: "structure range cannot act on the C block".into(),
        });
    }

    let margin_floor = 1.5 * delta;
    let margin_at = |s: f64| -> Result<f64, OuterError> {
        let blocks = SystemBlocks::from_block_matrix(
            &(sys.block_matrix() + structure.apply(&(s * &dz_dir))?),
            sys.state_dim(),
            sys.input_dim(),
            sys.output_dim(),
            sys.mode(),
        );
        let ham = match hamiltonian_of_blocks(&blocks) {
            Ok(h) => h,
            Err(_) => return Ok(-1.0),
        };
        let triple = eigen::target_eigentriple(&ham, None)?;
        Ok(triple.phi())
    };

    if margin_at(1.0)? <= margin_floor {
        return Err(OuterError::InitializationFailed {
            reason: "cancelling the C block along the structure does not clear the axis".into(),
        });
    }
    // Bisect for the feasibility boundary, then cushion into the interior.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if margin_at(mid)? > margin_floor {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut s0 = hi + 0.2 * (1.0 - hi);
    if margin_at(s0)? <= delta {
        s0 = 1.0;
    }
    let dz0 = s0 * &dz_dir;
    let eps0 = dz0.norm();
    Ok((eps0, dz0 / eps0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::fixtures::{example1, example2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Synthetic scalar oracle with exact square-root behaviour.
    fn sqrt_oracle(gamma: f64, eps_hat: f64, problem: Problem) -> impl FnMut(usize, f64, StepKind) -> Result<(f64, f64), OuterError> {
        move |_k, eps, _kind| {
            let arg = match problem {
                Problem::Enforce => eps - eps_hat,
                Problem::Radius => eps_hat - eps,
            };
            if arg <= 0.0 {
                return Ok((0.0, 0.0));
            }
            let f = gamma * arg.sqrt();
            let fp = problem.fprime_sign() * gamma / (2.0 * arg.sqrt());
            Ok((f, fp))
        }
    }

    /// Square-root oracle with a small higher-order defect, so the model
    /// iteration converges quadratically instead of in one shot.
    fn perturbed_sqrt_oracle(
        gamma: f64,
        eps_hat: f64,
        problem: Problem,
    ) -> impl FnMut(usize, f64, StepKind) -> Result<(f64, f64), OuterError> {
        move |_k, eps, _kind| {
            let arg = match problem {
                Problem::Enforce => eps - eps_hat,
                Problem::Radius => eps_hat - eps,
            };
            if arg <= 0.0 {
                return Ok((0.0, 0.0));
            }
            let root = arg.sqrt();
            let f = gamma * root * (1.0 + 0.3 * arg);
            let dfdarg = gamma * ((1.0 + 0.3 * arg) / (2.0 * root) + 0.3 * root);
            Ok((f, problem.fprime_sign() * dfdarg))
        }
    }

    #[test]
    fn synthetic_sqrt_model_converges_quadratically() {
        // Exact square-root data: the model is exact and the first
        // correction lands on the root.
        let mut config = OuterConfig::new(Problem::Enforce, 1e-4);
        config.mode = OuterMode::SqrtModel;
        config.tol = 1e-10;
        let gamma = 2.0;
        let eps_hat = 0.1;
        let (trace, _, best_k, converged) =
            sqrt_model_core(sqrt_oracle(gamma, eps_hat, Problem::Enforce), &config, 0.3).unwrap();
        assert!(converged);
        let root = eps_hat + (config.delta / gamma).powi(2);
        assert!((trace.rows[best_k].eps - root).abs() <= 1e-10);
        assert!(
            trace.rows.len() <= 5,
            "expected <= 4 corrections on exact data, got {}",
            trace.rows.len()
        );

        // Perturbed data: genuine quadratic error sequence.
        let mut config = OuterConfig::new(Problem::Enforce, 1e-4);
        config.mode = OuterMode::SqrtModel;
        config.tol = 1e-12;
        let (trace, _, _, converged) = sqrt_model_core(
            perturbed_sqrt_oracle(gamma, eps_hat, Problem::Enforce),
            &config,
            0.3,
        )
        .unwrap();
        assert!(converged);
        let limit = *trace.rows.last().map(|r| &r.eps).unwrap();
        let errs: Vec<f64> = trace
            .rows
            .iter()
            .map(|r| (r.eps - limit).abs())
            .take(trace.rows.len() - 1)
            .collect();
        let mut contracting = 0;
        for w in errs.windows(2) {
            if w[0] > 1e-13 && w[1] / w[0] <= 0.1 {
                contracting += 1;
            }
        }
        assert!(
            contracting >= 2,
            "expected at least two strongly contracting steps, errors {errs:?}"
        );
    }

    #[test]
    fn synthetic_sqrt_model_handles_rejection() {
        let mut config = OuterConfig::new(Problem::Radius, 1e-3);
        config.mode = OuterMode::SqrtModel;
        config.tol = 1e-9;
        // Start below eps_hat; the first model extrapolation may overshoot
        // past the coalescence and must backtrack.
        let (trace, _, best_k, converged) =
            sqrt_model_core(sqrt_oracle(1.5, 0.2, Problem::Radius), &config, 0.05).unwrap();
        assert!(converged);
        let root = 0.2 - (config.delta / 1.5).powi(2);
        assert!((trace.rows[best_k].eps - root).abs() <= 1e-8);
    }

    #[test]
    fn synthetic_newton_bisection_enforce() {
        let config = OuterConfig::new(Problem::Enforce, 1e-2);
        let (trace, bounds, best_k, converged) =
            newton_bisection_core(sqrt_oracle(1.0, 0.1, Problem::Enforce), &config, 0.5).unwrap();
        assert!(converged);
        let root = 0.1 + (config.delta / 1.0).powi(2);
        assert!((trace.rows[best_k].eps - root).abs() <= 1e-6);
        // Coalescence bracket encloses eps_hat.
        assert!(bounds.coalesce_lo <= 0.1 && 0.1 <= bounds.coalesce_hi);
    }

    #[test]
    fn synthetic_newton_bisection_radius_mixed_kinds() {
        let config = OuterConfig::new(Problem::Radius, 1e-2);
        let (trace, _, best_k, converged) =
            newton_bisection_core(sqrt_oracle(1.1, 0.1633, Problem::Radius), &config, 0.0).unwrap();
        assert!(converged);
        let root = 0.1633 - (config.delta / 1.1).powi(2);
        assert!((trace.rows[best_k].eps - root).abs() <= 1e-6);
        let kinds: Vec<StepKind> = trace.rows.iter().map(|r| r.kind).collect();
        assert!(kinds.contains(&StepKind::Newton));
        assert!(kinds.contains(&StepKind::Bisection));
    }

    #[test]
    fn root_at_start_needs_no_iterations() {
        let config = OuterConfig::new(Problem::Enforce, 1e-2);
        let root = 0.1 + (config.delta / 1.0).powi(2);
        let (trace, _, _, converged) =
            newton_bisection_core(sqrt_oracle(1.0, 0.1, Problem::Enforce), &config, root).unwrap();
        assert!(converged);
        assert_eq!(trace.rows.len(), 1);
    }

    #[test]
    fn sqrt_fit_recovers_exact_data() {
        let gamma = 1.7;
        let eps_hat = 0.23;
        let samples: Vec<(f64, f64)> = (1..=8)
            .map(|k| {
                let eps = eps_hat + 0.01 * k as f64;
                (eps, gamma * (eps - eps_hat).sqrt())
            })
            .collect();
        let fit = sqrt_fit_diagnostic(&samples).unwrap();
        assert!((fit.gamma - gamma).abs() < 1e-10);
        assert!((fit.eps_hat - eps_hat).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert!(fit.increasing);
    }

    #[test]
    fn sqrt_fit_flags_linear_data() {
        let samples: Vec<(f64, f64)> = (1..=10).map(|k| (0.1 * k as f64, 0.1 * k as f64)).collect();
        let fit = sqrt_fit_diagnostic(&samples).unwrap();
        assert!(fit.residual > 5e-2, "linear data must not fit the model, residual {}", fit.residual);
    }

    #[test]
    fn f_and_fprime_example2_values() {
        let sys = example2();
        let structure = PerturbationStructure::full(3, 1, 1);
        let flow = FlowConfig::new(FlowDirection::Descent);
        let e0 = DMatrix::from_element(4, 4, 0.25);
        let (f0, fp0, _) =
            f_and_fprime(&sys, &structure, 0.0, &e0, &flow, Problem::Radius).unwrap();
        assert!((f0 - 0.517251).abs() < 1e-4, "f(0) = {f0}");
        assert!(fp0 < 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let raw = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let e = &raw / raw.norm();
        let (f, _, _) = f_and_fprime(&sys, &structure, 0.01, &e, &flow, Problem::Radius).unwrap();
        assert!((f - 0.494635).abs() < 2e-3, "f(0.01) = {f}");
    }

    #[test]
    fn fprime_matches_finite_differences_on_example2() {
        let sys = example2();
        let structure = PerturbationStructure::full(3, 1, 1);
        let mut flow = FlowConfig::new(FlowDirection::Descent);
        flow.stall_tol = 1e-9;
        flow.max_steps = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let raw = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let mut e = &raw / raw.norm();
        let eps = 0.1;
        let (_, fp, flow_res) =
            f_and_fprime(&sys, &structure, eps, &e, &flow, Problem::Radius).unwrap();
        e = flow_res.e.clone();
        let h = 1e-5;
        let (f_plus, _, _) =
            f_and_fprime(&sys, &structure, eps + h, &e, &flow, Problem::Radius).unwrap();
        let (f_minus, _, _) =
            f_and_fprime(&sys, &structure, eps - h, &e, &flow, Problem::Radius).unwrap();
        let fd = (f_plus - f_minus) / (2.0 * h);
        assert!(
            (fd - fp).abs() <= 1e-3 * fp.abs(),
            "fd {fd} vs formula {fp}"
        );
    }

    #[test]
    fn radius_example2_reaches_reference_size() {
        let sys = example2();
        let structure = PerturbationStructure::full(3, 1, 1);
        let outer = OuterConfig::new(Problem::Radius, 1e-2);
        let flow = FlowConfig::new(FlowDirection::Descent);
        let e0 = DMatrix::from_element(4, 4, 0.25);
        let result = newton_bisection(&sys, &structure, 0.0, &e0, &outer, &flow).unwrap();
        assert!(result.converged, "trace: {:?}", result.trace.rows.iter().map(|r| (r.kind.label(), r.f, r.eps)).collect::<Vec<_>>());
        assert!(
            (result.eps_hat_delta - 0.163287).abs() <= 1e-3,
            "eps_hat_delta = {}",
            result.eps_hat_delta
        );
        assert!((result.f_final - outer.delta).abs() <= outer.tol);
        let kinds: Vec<StepKind> = result.trace.rows.iter().map(|r| r.kind).collect();
        assert!(kinds.contains(&StepKind::Newton));
        assert!(kinds.contains(&StepKind::Bisection));
        // The bracket encloses the coalescence size just above eps_hat_delta.
        assert!(result.eps_hat_bracket.0 <= result.eps_hat_bracket.1);
        assert!(result.eps_hat_bracket.1 < 0.17);
    }

    #[test]
    fn sqrt_model_cross_checks_newton_on_example1() {
        // Small-delta enforcement on the C-only structure: the sqrt-model
        // iteration and the Newton/bisection iteration must agree on the
        // optimal size (they run the same inner flow).
        let sys = example1();
        let structure = PerturbationStructure::gramian_weighted_c(&sys).unwrap();
        let q = structure.gramian_factor().unwrap().clone();
        let c0 = DMatrix::from_row_slice(1, 2, &[0.2018, 0.4615]);
        let dz0 = (&c0 - sys.c()) * q.transpose();
        let eps0 = dz0.norm();
        let e0 = &dz0 / eps0;
        let delta = 1e-4;
        let mut flow = FlowConfig::new(FlowDirection::Ascent);
        flow.early_stop_phi_below = Some(delta / 10.0);
        let newton_cfg = OuterConfig::new(Problem::Enforce, delta);
        let newton = newton_bisection(&sys, &structure, eps0, &e0, &newton_cfg, &flow).unwrap();
        let mut sqrt_cfg = OuterConfig::new(Problem::Enforce, delta);
        sqrt_cfg.mode = OuterMode::SqrtModel;
        let sqrt = sqrt_model_iteration(&sys, &structure, eps0, &e0, &sqrt_cfg, &flow).unwrap();
        assert!(sqrt.converged, "sqrt-model run flagged");
        assert!((sqrt.f_final - delta).abs() <= sqrt_cfg.tol);
        assert!(
            (sqrt.eps_hat_delta - newton.eps_hat_delta).abs() <= 2e-4,
            "sqrt {} vs newton {}",
            sqrt.eps_hat_delta,
            newton.eps_hat_delta
        );
        // The size sits just above the coalescence bracket.
        assert!(sqrt.eps_hat_delta >= sqrt.eps_hat_bracket.0 - 1e-6);
    }

    #[test]
    fn radius_runs_on_positive_real_systems() {
        // Small positive-real system: D + Dᵀ is PD and the transfer
        // function is strictly positive real at eps = 0.
        let sys = StateSpaceSystem::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, -0.2, -1.5]),
            DMatrix::from_row_slice(2, 1, &[0.5, 0.2]),
            DMatrix::from_row_slice(1, 2, &[0.4, 0.3]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            crate::system::RealnessMode::PositiveReal,
        )
        .unwrap();
        let structure = PerturbationStructure::full(2, 1, 1);
        let outer = OuterConfig::new(Problem::Radius, 1e-2);
        let mut flow = FlowConfig::new(FlowDirection::Descent);
        flow.constraint_mode = crate::flow::ConstraintMode::Penalized;
        let e0 = DMatrix::from_element(3, 3, 1.0 / 3.0);
        let result = newton_bisection(&sys, &structure, 0.0, &e0, &outer, &flow).unwrap();
        assert!(result.converged, "positive-real radius run must converge");
        assert!(result.eps_hat_delta > 0.0);
        assert!((result.f_final - 1e-2).abs() <= outer.tol);
        // Trace bracket invariant: lb nondecreasing, ub nonincreasing,
        // lb <= ub at every row.
        let mut prev_lb = 0.0f64;
        let mut prev_ub = f64::INFINITY;
        for row in &result.trace.rows {
            assert!(row.eps_lb >= prev_lb && row.eps_ub <= prev_ub);
            assert!(row.eps_lb <= row.eps_ub);
            prev_lb = row.eps_lb;
            prev_ub = row.eps_ub;
        }
    }

    #[test]
    fn enforce_pipeline_positive_real_mode() {
        // Non-passive positive-real-mode system: H(0) = -0.64 + 0.3 < 0.
        let sys = StateSpaceSystem::new(
            DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, -1.0, -0.5]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 1, &[0.3]),
            crate::system::RealnessMode::PositiveReal,
        )
        .unwrap();
        let grid: Vec<f64> = (0..200).map(|k| 2.0 * k as f64 / 199.0).collect();
        let sweep = crate::system::check_realness_grid(&sys, &grid).unwrap();
        assert!(!sweep.passive, "fixture must start non-passive");

        let structure = PerturbationStructure::full(2, 1, 1);
        let delta = 1e-2;
        let (eps0, e0) = fallback_initializer(&sys, &structure, delta).unwrap();
        let outer = OuterConfig::new(Problem::Enforce, delta);
        let mut flow = FlowConfig::new(FlowDirection::Ascent);
        flow.constraint_mode = crate::flow::ConstraintMode::Penalized;
        flow.early_stop_phi_below = Some(delta / 10.0);
        let result = newton_bisection(&sys, &structure, eps0, &e0, &outer, &flow).unwrap();
        // On this fixture the reachable best-margin sheet ends at a
        // feasibility cliff where f jumps from ~0.7 to an (algorithmic)
        // zero, so |f - delta| <= tol is not attained and the run flags
        // itself; only upper bounds are guaranteed on nonconvex problems.
        // The honest contract: a strictly passive result no larger than
        // the initializer, with margin at least delta.
        assert!(result.f_final >= delta);
        let valid = result.final_blocks.clone().validate().unwrap();
        let sweep = crate::system::check_realness_grid(&valid, &grid).unwrap();
        assert!(sweep.passive, "enforced system failed the sweep");
        assert!(result.eps_hat_delta <= eps0);
        if !result.converged {
            // Flagged runs still report a tight location of the cliff.
            let (lo, hi) = result.eps_hat_bracket;
            assert!(lo <= result.eps_hat_delta * 1.001);
            let _ = hi;
        }
    }

    #[test]
    fn radius_pipeline_with_sparsity_structure() {
        // Restrict the perturbation to the C row and the D entry.
        let sys = example2();
        let structure =
            PerturbationStructure::sparsity(3, 1, 1, &[(3, 0), (3, 1), (3, 2), (3, 3)]).unwrap();
        let outer = OuterConfig::new(Problem::Radius, 1e-2);
        let mut flow = FlowConfig::new(FlowDirection::Descent);
        flow.constraint_mode = crate::flow::ConstraintMode::Penalized;
        let (k, l) = structure.dims();
        let e0 = DMatrix::from_element(k, l, 1.0 / (k as f64).sqrt());
        let result = newton_bisection(&sys, &structure, 0.0, &e0, &outer, &flow).unwrap();
        assert!(result.converged);
        assert!((result.f_final - 1e-2).abs() <= outer.tol);
        // Only the masked entries moved.
        let diff = result.final_blocks.block_matrix() - sys.block_matrix();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(diff[(i, j)], 0.0, "unmasked entry ({i},{j}) moved");
            }
        }
        // The restricted radius cannot beat the unrestricted one.
        assert!(result.eps_hat_delta >= 0.14, "eps {}", result.eps_hat_delta);
    }

    #[test]
    fn radius_pipeline_scalar_system() {
        let sys = StateSpaceSystem::new(
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[0.5]),
            DMatrix::from_row_slice(1, 1, &[0.1]),
            crate::system::RealnessMode::BoundedReal,
        )
        .unwrap();
        let structure = PerturbationStructure::full(1, 1, 1);
        let outer = OuterConfig::new(Problem::Radius, 1e-2);
        let mut flow = FlowConfig::new(FlowDirection::Descent);
        flow.constraint_mode = crate::flow::ConstraintMode::Penalized;
        let e0 = DMatrix::from_element(2, 2, 0.5);
        let result = newton_bisection(&sys, &structure, 0.0, &e0, &outer, &flow).unwrap();
        assert!(result.converged);
        assert!(result.eps_hat_delta > 0.0);
    }

    #[test]
    fn fallback_initializer_examples() {
        let sys = example1();
        let structure = PerturbationStructure::gramian_weighted_c(&sys).unwrap();
        let (eps0, e0) = fallback_initializer(&sys, &structure, 1e-2).unwrap();
        assert!(eps0 > 0.0);
        assert!((e0.norm() - 1.0).abs() < 1e-12);
        // Feasibility: the perturbed system has strictly positive margin.
        let flow = FlowConfig::new(FlowDirection::Ascent);
        let bundle = free_gradient(&sys, &structure, eps0, &e0, &flow.thresholds, None, None).unwrap();
        assert!(bundle.phi > 0.0);

        let full = PerturbationStructure::full(2, 1, 1);
        let (eps0f, e0f) = fallback_initializer(&sys, &full, 1e-2).unwrap();
        let bundle_f = free_gradient(&sys, &full, eps0f, &e0f, &flow.thresholds, None, None).unwrap();
        assert!(bundle_f.phi > 0.0);

        // Already-passive input is rejected with an explanatory error.
        let passive = example2();
        let structure2 = PerturbationStructure::full(3, 1, 1);
        assert!(matches!(
            fallback_initializer(&passive, &structure2, 1e-2),
            Err(OuterError::InitialNotFeasible { .. })
        ));
    }
}
