//! `passivion` — structured passivity enforcement and passivity radius for
//! LTI state-space systems.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

mod config;
mod report;
mod run;
mod trace;

use config::{load_structure_text, ProblemArg, RunConfig};
use passivion::outer::OuterMode;

static VERBOSITY: OnceLock<u8> = OnceLock::new();

pub fn verbosity() -> u8 {
    *VERBOSITY.get_or_init(|| match std::env::var("PASSIVION_LOG").as_deref() {
        Ok("quiet") | Ok("0") => 0,
        Ok("debug") | Ok("2") => 2,
        _ => 1,
    })
}

#[macro_export]
macro_rules! log_info {
    ($($arg:tt)*) => {
        if $crate::verbosity() >= 1 { eprintln!($($arg)*); }
    };
}

#[macro_export]
macro_rules! log_debug {
    ($($arg:tt)*) => {
        if $crate::verbosity() >= 2 { eprintln!($($arg)*); }
    };
}

#[derive(Parser)]
#[command(
    name = "passivion",
    about = "Structured passivity enforcement and distance to non-passivity for LTI systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enforce a delta-margin of passivity with a locally minimal
    /// structured perturbation (input system must be non-passive).
    Enforce(RunArgs),
    /// Compute the structured distance at which a passive system loses its
    /// delta-margin (approaching the passivity radius from below).
    Radius(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the system JSON document.
    #[arg(long)]
    system: PathBuf,
    /// Structure spec: inline JSON or a path to a spec file.
    #[arg(long)]
    structure: String,
    /// Target distance of the Hamiltonian eigenvalues from the axis.
    #[arg(long)]
    delta: f64,
    /// Initial passive system for enforcement (JSON, same schema).
    #[arg(long)]
    init: Option<PathBuf>,
    /// Outer iteration: "newton" (mixed Newton/bisection) or "sqrt".
    #[arg(long, default_value = "newton")]
    outer: String,
    /// Integrate the inner flow on a rank-r manifold.
    #[arg(long, value_name = "R")]
    low_rank: Option<usize>,
    /// Number of extra randomized starts.
    #[arg(long, default_value_t = 0)]
    multistart: usize,
    /// RNG seed for randomized starts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stability threshold on the perturbed state matrix.
    #[arg(long, default_value_t = 1e-3)]
    theta_a: f64,
    /// Feedthrough definiteness threshold.
    #[arg(long, default_value_t = 1e-3)]
    theta_d: f64,
    /// Output directory (one subdirectory per run, named by digest).
    #[arg(long, default_value = "passivion-runs")]
    out: PathBuf,
}

fn build_config(problem: ProblemArg, args: RunArgs) -> anyhow::Result<RunConfig> {
    let system_text = std::fs::read_to_string(&args.system)
        .with_context(|| format!("reading system file {:?}", args.system))?;
    let structure_text = load_structure_text(&args.structure)?;
    let init_text = match &args.init {
        Some(path) => Some(
            std::fs::read_to_string(path)
                .with_context(|| format!("reading init file {path:?}"))?,
        ),
        None => None,
    };
    let outer_mode = match args.outer.as_str() {
        "newton" => OuterMode::NewtonBisection,
        "sqrt" => OuterMode::SqrtModel,
        other => anyhow::bail!("unknown --outer mode {other:?}; expected newton or sqrt"),
    };
    Ok(RunConfig {
        problem,
        system_path: args.system,
        system_text,
        structure_text,
        delta: args.delta,
        init_path: args.init,
        init_text,
        outer_mode,
        low_rank: args.low_rank,
        multistart: args.multistart,
        seed: args.seed,
        theta_a: args.theta_a,
        theta_d: args.theta_d,
        out_dir: args.out,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (problem, args) = match cli.command {
        Command::Enforce(args) => (ProblemArg::Enforce, args),
        Command::Radius(args) => (ProblemArg::Radius, args),
    };
    let config = match build_config(problem, args) {
        Ok(c) => c,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(3);
        }
    };
    match run::run(&config) {
        Ok(outcome) => {
            println!("{}", outcome.report.render_text());
            if outcome.exit_code == 2 {
                eprintln!("warning: outer iteration did not reach |f - delta| <= tol; result flagged");
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
