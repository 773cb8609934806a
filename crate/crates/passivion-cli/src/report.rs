//! Run report: structured JSON plus a human-readable text rendering, both
//! written atomically (temp file + rename) into the run directory.

use std::path::Path;

use anyhow::{Context, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct MatrixDump {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, full precision.
    pub data: Vec<f64>,
}

impl MatrixDump {
    pub fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        MatrixDump {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    fn pretty(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            out.push_str("    ");
            for j in 0..self.cols {
                out.push_str(&format!("{:>10.4}", self.data[i * self.cols + j]));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StartSummary {
    pub label: String,
    pub converged: bool,
    pub eps_hat_delta: f64,
    pub f_final: f64,
    pub dz_from_original: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub problem: String,
    pub digest: String,
    pub delta: f64,
    pub converged: bool,
    pub eps_hat_delta: f64,
    /// Bracket on the coalescence size itself (midpoint and half-width).
    pub eps_hat_mid: f64,
    pub eps_hat_halfwidth: f64,
    pub f_final: f64,
    /// Structured perturbation size measured from the original system.
    pub norm_dz: f64,
    pub norm_ldz: f64,
    /// Size of the initial perturbation (enforce only).
    pub norm_dz_init: Option<f64>,
    pub perturbed: PerturbedDump,
    pub eigenvalues_nearest: Vec<(f64, f64)>,
    pub realness_passive: bool,
    pub realness_min: f64,
    pub realness_min_omega: f64,
    pub self_check_lambda_error: f64,
    pub starts: Vec<StartSummary>,
    pub outer_trace_file: String,
    pub inner_trace_files: Vec<String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbedDump {
    pub a: MatrixDump,
    pub b: MatrixDump,
    pub c: MatrixDump,
    pub d: MatrixDump,
}

impl RunReport {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("passivion {} report\n", self.problem));
        s.push_str(&format!("run digest        : {}\n", self.digest));
        s.push_str(&format!("delta             : {:.6e}\n", self.delta));
        s.push_str(&format!(
            "converged         : {}\n",
            if self.converged { "yes" } else { "NO (flagged)" }
        ));
        s.push_str(&format!("eps_hat_delta     : {:.6}\n", self.eps_hat_delta));
        s.push_str(&format!(
            "coalescence size  : {:.6} +- {:.2e} (bracket midpoint)\n",
            self.eps_hat_mid, self.eps_hat_halfwidth
        ));
        s.push_str(&format!("final f           : {:.6}\n", self.f_final));
        s.push_str(&format!("||dZ||_F          : {:.6}\n", self.norm_dz));
        s.push_str(&format!("||L[dZ]||_F       : {:.6}\n", self.norm_ldz));
        if let Some(init) = self.norm_dz_init {
            s.push_str(&format!(
                "||dZ_init||_F     : {:.6} (result {} the initializer)\n",
                init,
                if self.norm_dz <= init + 1e-12 {
                    "dominates"
                } else {
                    "DOES NOT dominate"
                }
            ));
        }
        s.push_str("\nperturbed system (4-decimal view; full precision in report.json):\n");
        s.push_str("  A =\n");
        s.push_str(&self.perturbed.a.pretty());
        s.push_str("  B =\n");
        s.push_str(&self.perturbed.b.pretty());
        s.push_str("  C =\n");
        s.push_str(&self.perturbed.c.pretty());
        s.push_str("  D =\n");
        s.push_str(&self.perturbed.d.pretty());
        s.push_str("\nHamiltonian eigenvalues nearest the imaginary axis:\n");
        for (re, im) in &self.eigenvalues_nearest {
            s.push_str(&format!("    {:+.6e} {:+.6e}i\n", re, im));
        }
        s.push_str(&format!(
            "\nrealness sweep    : {} (min {:.6e} at omega {:.4})\n",
            if self.realness_passive { "passive" } else { "NOT passive" },
            self.realness_min,
            self.realness_min_omega
        ));
        s.push_str(&format!(
            "self-check        : reloaded system reproduces lambda to {:.2e}\n",
            self.self_check_lambda_error
        ));
        s.push_str("\nstarts:\n");
        for st in &self.starts {
            s.push_str(&format!(
                "    {:<12} converged={} eps_hat_delta={:.6} f={:.6} ||dZ_orig||={:.6}\n",
                st.label, st.converged, st.eps_hat_delta, st.f_final, st.dz_from_original
            ));
        }
        s.push_str(&format!("\nouter trace       : {}\n", self.outer_trace_file));
        for f in &self.inner_trace_files {
            s.push_str(&format!("inner trace       : {f}\n"));
        }
        s.push_str(&format!("wall time         : {:.3}s\n", self.wall_seconds));
        s
    }
}

pub fn eigenvalues_nearest_axis(eigs: &[Complex64], count: usize) -> Vec<(f64, f64)> {
    let mut sorted: Vec<Complex64> = eigs.to_vec();
    sorted.sort_by(|a, b| {
        (a.re.abs(), -a.im)
            .partial_cmp(&(b.re.abs(), -b.im))
            .unwrap()
    });
    sorted.iter().take(count).map(|l| (l.re, l.im)).collect()
}

/// Write-temp-then-rename so partially written files never appear under the
/// final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().context("target path has no parent")?;
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {tmp:?}"))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {path:?}"))?;
    Ok(())
}
