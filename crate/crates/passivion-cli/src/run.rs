//! Orchestration of a full run: load inputs, build the structure, find a
//! feasible start (enforcement) or start from zero (radius), run the outer
//! iteration for every start, keep the best result and write the report
//! and trace files.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use passivion::fileio::{blocks_to_json, system_from_json, StructureSpec};
use passivion::flow::FlowConfig;
use passivion::gradient::ConstraintThresholds;
use passivion::linalg::eigenvalues;
use passivion::outer::{
    fallback_initializer, newton_bisection, sqrt_model_iteration, OuterConfig, OuterError,
    OuterMode, PassivationResult, Problem,
};
use passivion::structure::PerturbationStructure;
use passivion::system::{
    build_hamiltonian, check_realness_grid, default_frequency_grid, hamiltonian_of_blocks,
    StateSpaceSystem,
};

use crate::config::{ProblemArg, RunConfig};
use crate::report::{
    eigenvalues_nearest_axis, write_atomic, MatrixDump, PerturbedDump, RunReport, StartSummary,
};
use crate::trace::{emit_trace, render_inner_trace};
use crate::{log_debug, log_info};

/// Errors mapped to distinct process exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    SystemInvariant(String),
    Structure(String),
    Initializer(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::SystemInvariant(_) => 4,
            CliError::Structure(_) => 5,
            CliError::Initializer(_) => 6,
            CliError::Numerical(_) => 7,
            CliError::Io(_) => 8,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::SystemInvariant(m)
            | CliError::Structure(m)
            | CliError::Initializer(m)
            | CliError::Numerical(m)
            | CliError::Io(m) => m,
        }
    }
}

fn map_outer_error(err: OuterError) -> CliError {
    match err {
        OuterError::InitialNotFeasible { .. } | OuterError::InitializationFailed { .. } => {
            CliError::Initializer(err.to_string())
        }
        other => CliError::Numerical(other.to_string()),
    }
}

pub struct RunOutcome {
    pub report: RunReport,
    pub exit_code: i32,
}

struct StartResult {
    label: String,
    result: PassivationResult,
    dz_from_original: DMatrix<f64>,
}

pub fn run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let started = Instant::now();
    config
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let sys = system_from_json(&config.system_text).map_err(classify_file_error)?;
    let spec = StructureSpec::parse(&config.structure_text)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let structure = spec.build(&sys).map_err(classify_file_error)?;
    log_info!(
        "loaded system n={} m={} p={} ({:?}), structure dims {:?}",
        sys.state_dim(),
        sys.input_dim(),
        sys.output_dim(),
        sys.mode(),
        structure.dims()
    );

    let thresholds = ConstraintThresholds {
        theta_a: config.theta_a,
        theta_d: config.theta_d,
        ..Default::default()
    };
    let problem = match config.problem {
        ProblemArg::Enforce => Problem::Enforce,
        ProblemArg::Radius => Problem::Radius,
    };
    let mut flow = FlowConfig::new(problem.flow_direction());
    flow.thresholds = thresholds;
    flow.constraint_mode = if structure.perturbs_a() || structure.perturbs_d() {
        passivion::flow::ConstraintMode::Penalized
    } else {
        passivion::flow::ConstraintMode::None
    };
    flow.rank = config.low_rank;
    flow.record_trace = true;
    if problem == Problem::Enforce {
        flow.early_stop_phi_below = Some(config.delta / 10.0);
    }

    let mut outer = OuterConfig::new(problem, config.delta);
    outer.mode = config.outer_mode;

    // Starting pairs (eps0, E0).
    let (k, l) = structure.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut starts: Vec<(String, f64, DMatrix<f64>)> = Vec::new();
    match problem {
        Problem::Radius => {
            let canonical = unit_matrix(&mut rng, k, l);
            starts.push(("canonical".into(), 0.0, canonical));
            for i in 0..config.multistart {
                starts.push((format!("multistart-{i}"), 0.0, unit_matrix(&mut rng, k, l)));
            }
        }
        Problem::Enforce => {
            let (eps0, e0) = enforce_start(&sys, &structure, config)?;
            log_info!("enforce start: eps0 = {eps0:.6}");
            for i in 0..config.multistart {
                let jitter = unit_matrix(&mut rng, k, l);
                let mixed = &e0 + 0.3 * jitter;
                let norm = mixed.norm();
                starts.push((format!("multistart-{i}"), eps0, mixed / norm));
            }
            starts.insert(0, ("canonical".into(), eps0, e0));
        }
    }

    // Run every start; the first must succeed, extras may fail feasibility.
    let mut results: Vec<StartResult> = Vec::new();
    let mut failed: Vec<StartSummary> = Vec::new();
    for (idx, (label, eps0, e0)) in starts.iter().enumerate() {
        let attempt = match config.outer_mode {
            OuterMode::NewtonBisection => {
                newton_bisection(&sys, &structure, *eps0, e0, &outer, &flow)
            }
            OuterMode::SqrtModel => {
                sqrt_model_iteration(&sys, &structure, *eps0, e0, &outer, &flow)
            }
        };
        match attempt {
            Ok(result) => {
                let dz = result.eps_hat_delta * &result.e_final;
                log_info!(
                    "start {label}: converged={} eps_hat_delta={:.6} f={:.6}",
                    result.converged,
                    result.eps_hat_delta,
                    result.f_final
                );
                results.push(StartResult {
                    label: label.clone(),
                    result,
                    dz_from_original: dz,
                });
            }
            Err(err) if idx == 0 => return Err(map_outer_error(err)),
            Err(err) => {
                log_debug!("start {label} failed: {err}");
                failed.push(StartSummary {
                    label: label.clone(),
                    converged: false,
                    eps_hat_delta: f64::NAN,
                    f_final: f64::NAN,
                    dz_from_original: f64::NAN,
                });
            }
        }
    }

    // Best result: converged first, then smallest perturbation size.
    results.sort_by(|a, b| {
        (!a.result.converged, a.result.eps_hat_delta)
            .partial_cmp(&(!b.result.converged, b.result.eps_hat_delta))
            .unwrap()
    });
    let best = results.first().ok_or_else(|| {
        CliError::Numerical("no start produced a usable result".to_string())
    })?;

    let mut starts_summary: Vec<StartSummary> = results
        .iter()
        .map(|r| StartSummary {
            label: r.label.clone(),
            converged: r.result.converged,
            eps_hat_delta: r.result.eps_hat_delta,
            f_final: r.result.f_final,
            dz_from_original: r.dz_from_original.norm(),
        })
        .collect();
    starts_summary.extend(failed);

    // Assemble the report around the best run.
    let result = &best.result;
    let final_blocks = result.final_blocks.clone();
    let perturbed_json = blocks_to_json(&final_blocks);
    let ham = hamiltonian_of_blocks(&final_blocks)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let eigs = eigenvalues(&ham.m).map_err(|e| CliError::Numerical(e.to_string()))?;
    let nearest = eigenvalues_nearest_axis(&eigs, 4.min(eigs.len()));

    // Independent passivity sweep and self-verification via file round-trip.
    let (realness_passive, realness_min, realness_min_omega, self_check) =
        match final_blocks.clone().validate() {
            Ok(valid) => {
                let grid = default_frequency_grid();
                let report = check_realness_grid(&valid, &grid)
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                let reloaded = system_from_json(&perturbed_json)
                    .map_err(|e| CliError::Io(e.to_string()))?;
                let ham2 = build_hamiltonian(&reloaded)
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                let triple = passivion::eigen::target_eigentriple(&ham2, None)
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                let err = (triple.lambda - result.lambda_final).norm();
                (report.passive, report.min_value, report.min_omega, err)
            }
            Err(e) => {
                log_info!("perturbed system failed validation: {e}");
                (false, f64::NAN, f64::NAN, f64::NAN)
            }
        };

    // Output files.
    let run_dir = config.run_dir();
    std::fs::create_dir_all(&run_dir).map_err(|e| CliError::Io(e.to_string()))?;
    let outer_path = run_dir.join("outer_trace.csv");
    emit_trace(&result.trace, &outer_path).map_err(|e| CliError::Io(e.to_string()))?;
    let mut inner_files = Vec::new();
    for (kidx, eps, rows) in result.inner_traces.iter() {
        let name = format!("inner_trace_k{kidx:03}.csv");
        let path = run_dir.join(&name);
        let mut body = format!("# eps = {eps:.12e}\n");
        body.push_str(&render_inner_trace(rows));
        write_atomic(&path, body.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
        inner_files.push(name);
    }
    write_atomic(&run_dir.join("system_perturbed.json"), perturbed_json.as_bytes())
        .map_err(|e| CliError::Io(e.to_string()))?;

    let (lo, hi) = result.eps_hat_bracket;
    let (mid, half) = if hi.is_finite() {
        (0.5 * (lo + hi), 0.5 * (hi - lo))
    } else {
        (lo, f64::INFINITY)
    };
    let norm_dz_init = match problem {
        Problem::Enforce => Some(starts[0].1),
        Problem::Radius => None,
    };
    let report = RunReport {
        problem: config.problem.label().to_string(),
        digest: config.digest(),
        delta: config.delta,
        converged: result.converged,
        eps_hat_delta: result.eps_hat_delta,
        eps_hat_mid: mid,
        eps_hat_halfwidth: half,
        f_final: result.f_final,
        norm_dz: best.dz_from_original.norm(),
        norm_ldz: result.norm_ldz,
        norm_dz_init,
        perturbed: PerturbedDump {
            a: MatrixDump::from(&final_blocks.a),
            b: MatrixDump::from(&final_blocks.b),
            c: MatrixDump::from(&final_blocks.c),
            d: MatrixDump::from(&final_blocks.d),
        },
        eigenvalues_nearest: nearest,
        realness_passive,
        realness_min,
        realness_min_omega,
        self_check_lambda_error: self_check,
        starts: starts_summary,
        outer_trace_file: outer_path.display().to_string(),
        inner_trace_files: inner_files,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_atomic(&run_dir.join("report.json"), json.as_bytes())
        .map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&run_dir.join("report.txt"), report.render_text().as_bytes())
        .map_err(|e| CliError::Io(e.to_string()))?;

    let exit_code = if report.converged { 0 } else { 2 };
    Ok(RunOutcome { report, exit_code })
}

fn classify_file_error(err: passivion::fileio::FileError) -> CliError {
    use passivion::fileio::FileError;
    match err {
        FileError::System(inner) => CliError::SystemInvariant(inner.to_string()),
        FileError::Structure(inner) => CliError::Structure(inner.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn unit_matrix(rng: &mut ChaCha8Rng, k: usize, l: usize) -> DMatrix<f64> {
    loop {
        let raw = DMatrix::<f64>::from_fn(k, l, |_, _| rng.gen_range(-1.0..1.0));
        let norm = raw.norm();
        if norm > 1e-6 {
            return raw / norm;
        }
    }
}

/// Start for enforcement: pull the `--init` system back through the
/// structure, or fall back to the shrink-C homotopy.
fn enforce_start(
    sys: &StateSpaceSystem,
    structure: &PerturbationStructure,
    config: &RunConfig,
) -> Result<(f64, DMatrix<f64>), CliError> {
    if let Some(init_text) = &config.init_text {
        let init_sys = system_from_json(init_text).map_err(classify_file_error)?;
        if init_sys.state_dim() != sys.state_dim()
            || init_sys.input_dim() != sys.input_dim()
            || init_sys.output_dim() != sys.output_dim()
        {
            return Err(CliError::Initializer(
                "initializer dimensions do not match the system".to_string(),
            ));
        }
        let dx = init_sys.block_matrix() - sys.block_matrix();
        let dz0 = structure
            .pullback(&dx, 1e-6)
            .map_err(|e| CliError::Initializer(format!("initializer not in structure range: {e}")))?;
        let eps0 = dz0.norm();
        if eps0 == 0.0 {
            return Err(CliError::Initializer(
                "initializer equals the input system; nothing to start from".to_string(),
            ));
        }
        Ok((eps0, dz0 / eps0))
    } else {
        fallback_initializer(sys, structure, config.delta).map_err(map_outer_error)
    }
}
