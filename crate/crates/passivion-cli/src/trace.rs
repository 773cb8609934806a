//! CSV emission for the outer and inner traces. Columns and formatting are
//! stable: six fractional digits, deterministic ordering, `inf` for the
//! unset upper bound.

use std::path::Path;

use anyhow::{bail, Context, Result};
use passivion::flow::InnerTraceRow;
use passivion::outer::{OuterTrace, OuterTraceRow, StepKind};

fn fmt6(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.6}")
    }
}

pub fn render_outer_trace(trace: &OuterTrace) -> String {
    let mut out = String::from("iteration,kind,f,eps,eps_lb,eps_ub,fprime\n");
    for row in &trace.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.k,
            row.kind.label(),
            fmt6(row.f),
            fmt6(row.eps),
            fmt6(row.eps_lb),
            fmt6(row.eps_ub),
            fmt6(row.fprime),
        ));
    }
    out
}

/// Writes the outer trace; refuses to create a file for an empty trace.
pub fn emit_trace(trace: &OuterTrace, path: &Path) -> Result<()> {
    if trace.rows.is_empty() {
        bail!("refusing to write an empty outer trace");
    }
    crate::report::write_atomic(path, render_outer_trace(trace).as_bytes())
}

fn parse_kind(label: &str) -> Result<StepKind> {
    Ok(match label {
        "init" => StepKind::Init,
        "newton" => StepKind::Newton,
        "bisection" => StepKind::Bisection,
        "sqrt-model" => StepKind::SqrtModel,
        "reject" => StepKind::Reject,
        other => bail!("unknown step kind {other:?}"),
    })
}

fn parse_f64(field: &str) -> Result<f64> {
    match field {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        other => other.parse::<f64>().context("parsing trace number"),
    }
}

/// Used by tests and downstream tooling to read traces back.
#[allow(dead_code)]
pub fn parse_outer_trace(text: &str) -> Result<OuterTrace> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            bail!("trace line {idx} has {} fields, expected 7", fields.len());
        }
        rows.push(OuterTraceRow {
            k: fields[0].parse().context("parsing iteration index")?,
            kind: parse_kind(fields[1])?,
            f: parse_f64(fields[2])?,
            eps: parse_f64(fields[3])?,
            eps_lb: parse_f64(fields[4])?,
            eps_ub: parse_f64(fields[5])?,
            fprime: parse_f64(fields[6])?,
        });
    }
    Ok(OuterTrace { rows })
}

pub fn render_inner_trace(rows: &[InnerTraceRow]) -> String {
    let mut out = String::from("step,h,accepted,improvement,phi,g_norm,mu,margin_a,margin_d,rank\n");
    for row in rows {
        out.push_str(&format!(
            "{},{:.3e},{},{:.3e},{},{},{},{},{},{}\n",
            row.step,
            row.h,
            u8::from(row.accepted),
            row.improvement,
            fmt6(row.phi),
            fmt6(row.g_norm),
            fmt6(row.mu),
            fmt6(row.margin_a),
            fmt6(row.margin_d),
            row.rank.map(|r| r.to_string()).unwrap_or_default(),
        ));
    }
    out
}
