//! Run configuration: everything a run needs, validated up front, plus the
//! content digest that names the run directory.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use passivion::outer::OuterMode;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProblemArg {
    Enforce,
    Radius,
}

impl ProblemArg {
    pub fn label(self) -> &'static str {
        match self {
            ProblemArg::Enforce => "enforce",
            ProblemArg::Radius => "radius",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemArg,
    /// Kept for diagnostics in error paths.
    #[allow(dead_code)]
    pub system_path: PathBuf,
    pub system_text: String,
    /// Raw structure spec (inline JSON or the contents of a spec file).
    pub structure_text: String,
    pub delta: f64,
    #[allow(dead_code)]
    pub init_path: Option<PathBuf>,
    pub init_text: Option<String>,
    pub outer_mode: OuterMode,
    pub low_rank: Option<usize>,
    pub multistart: usize,
    pub seed: u64,
    pub theta_a: f64,
    pub theta_d: f64,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            bail!("--delta must be a positive finite number, got {}", self.delta);
        }
        if self.theta_a <= 0.0 || self.theta_d <= 0.0 {
            bail!("--theta-a and --theta-d must be positive");
        }
        if let Some(r) = self.low_rank {
            if r == 0 {
                bail!("--low-rank must be at least 1");
            }
        }
        Ok(())
    }

    /// FNV-1a content digest over every input that affects the run.
    pub fn digest(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.problem.label().as_bytes());
        eat(self.system_text.as_bytes());
        eat(self.structure_text.as_bytes());
        eat(format!("{:?}", self.delta).as_bytes());
        if let Some(t) = &self.init_text {
            eat(t.as_bytes());
        }
        eat(format!("{:?}", self.outer_mode).as_bytes());
        eat(format!("{:?}", self.low_rank).as_bytes());
        eat(self.multistart.to_le_bytes().as_slice());
        eat(self.seed.to_le_bytes().as_slice());
        eat(format!("{:?}-{:?}", self.theta_a, self.theta_d).as_bytes());
        format!("{h:016x}")
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(format!("run-{}", self.digest()))
    }
}

/// Reads the `--structure` argument: inline JSON wins, otherwise the value
/// is treated as a path.
pub fn load_structure_text(arg: &str) -> Result<String> {
    let trimmed = arg.trim();
    if trimmed.starts_with('{') {
        return Ok(trimmed.to_string());
    }
    std::fs::read_to_string(trimmed)
        .with_context(|| format!("reading structure spec file {trimmed:?}"))
}
