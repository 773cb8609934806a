//! On-disk formats shared across the tools: the JSON system document
//! (`n,m,p`, `mode`, row-major `A,B,C,D` at full precision) and the
//! structure spec (`{"kind": "full"|"gramian_c"|"sparsity", "mask": ...}`).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::structure::{PerturbationStructure, StructureError};
use crate::system::{RealnessMode, StateSpaceSystem, SystemBlocks, SystemError};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("array {name} has length {got}, expected {expected}")]
    LengthMismatch {
        name: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("unknown mode {0:?}; expected \"positive_real\" or \"bounded_real\"")]
    UnknownMode(String),
    #[error("unknown structure kind {0:?}; expected \"full\", \"gramian_c\" or \"sparsity\"")]
    UnknownKind(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Structure(#[from] StructureError),
}

/// Serialized system document. Matrices are row-major; serde_json writes
/// floats in shortest round-trip form, so no precision is lost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemFile {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub mode: String,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
}

pub fn mode_label(mode: RealnessMode) -> &'static str {
    match mode {
        RealnessMode::PositiveReal => "positive_real",
        RealnessMode::BoundedReal => "bounded_real",
    }
}

fn mode_from_label(label: &str) -> Result<RealnessMode, FileError> {
    match label {
        "positive_real" => Ok(RealnessMode::PositiveReal),
        "bounded_real" => Ok(RealnessMode::BoundedReal),
        other => Err(FileError::UnknownMode(other.to_string())),
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn from_row_major(
    name: &'static str,
    data: &[f64],
    rows: usize,
    cols: usize,
) -> Result<DMatrix<f64>, FileError> {
    if data.len() != rows * cols {
        return Err(FileError::LengthMismatch {
            name,
            got: data.len(),
            expected: rows * cols,
        });
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

impl SystemFile {
    pub fn from_system(sys: &StateSpaceSystem) -> Self {
        Self::from_blocks(&sys.blocks())
    }

    pub fn from_blocks(blocks: &SystemBlocks) -> Self {
        SystemFile {
            n: blocks.n(),
            m: blocks.m(),
            p: blocks.p(),
            mode: mode_label(blocks.mode).to_string(),
            a: row_major(&blocks.a),
            b: row_major(&blocks.b),
            c: row_major(&blocks.c),
            d: row_major(&blocks.d),
        }
    }

    pub fn into_system(&self) -> Result<StateSpaceSystem, FileError> {
        let mode = mode_from_label(&self.mode)?;
        let a = from_row_major("A", &self.a, self.n, self.n)?;
        let b = from_row_major("B", &self.b, self.n, self.m)?;
        let c = from_row_major("C", &self.c, self.p, self.n)?;
        let d = from_row_major("D", &self.d, self.p, self.m)?;
        Ok(StateSpaceSystem::new(a, b, c, d, mode)?)
    }
}

pub fn system_to_json(sys: &StateSpaceSystem) -> String {
    serde_json::to_string_pretty(&SystemFile::from_system(sys)).expect("serializable")
}

pub fn blocks_to_json(blocks: &SystemBlocks) -> String {
    serde_json::to_string_pretty(&SystemFile::from_blocks(blocks)).expect("serializable")
}

pub fn system_from_json(text: &str) -> Result<StateSpaceSystem, FileError> {
    let file: SystemFile = serde_json::from_str(text)?;
    file.into_system()
}

/// CLI structure spec: which entries of the block matrix a perturbation may
/// touch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureSpec {
    pub kind: String,
    #[serde(default)]
    pub mask: Vec<(usize, usize)>,
}

impl StructureSpec {
    pub fn parse(text: &str) -> Result<Self, FileError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Builds the structure against a concrete system (the Gramian-weighted
    /// kind needs `A` and `B`).
    pub fn build(&self, sys: &StateSpaceSystem) -> Result<PerturbationStructure, FileError> {
        let (n, m, p) = (sys.state_dim(), sys.input_dim(), sys.output_dim());
        match self.kind.as_str() {
            "full" => Ok(PerturbationStructure::full(n, m, p)),
            "gramian_c" => Ok(PerturbationStructure::gramian_weighted_c(sys)?),
            "sparsity" => Ok(PerturbationStructure::sparsity(n, m, p, &self.mask)?),
            other => Err(FileError::UnknownKind(other.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::fixtures::example2;

    #[test]
    fn system_round_trip_is_exact() {
        let sys = example2();
        let json = system_to_json(&sys);
        let back = system_from_json(&json).unwrap();
        assert_eq!(back.a(), sys.a());
        assert_eq!(back.b(), sys.b());
        assert_eq!(back.c(), sys.c());
        assert_eq!(back.d(), sys.d());
        assert_eq!(back.mode(), sys.mode());
    }

    #[test]
    fn rejects_malformed_documents() {
        let sys = example2();
        let mut file = SystemFile::from_system(&sys);
        file.a.pop();
        let err = file.into_system().unwrap_err();
        assert!(matches!(err, FileError::LengthMismatch { name: "A", .. }));

        let mut file = SystemFile::from_system(&sys);
        file.mode = "banana".into();
        assert!(matches!(file.into_system(), Err(FileError::UnknownMode(_))));
    }

    #[test]
    fn structure_spec_parsing() {
        let sys = example2();
        let spec = StructureSpec::parse(r#"{"kind":"full"}"#).unwrap();
        assert_eq!(spec.build(&sys).unwrap().dims(), (4, 4));
        let spec = StructureSpec::parse(r#"{"kind":"gramian_c"}"#).unwrap();
        assert_eq!(spec.build(&sys).unwrap().dims(), (1, 3));
        let spec = StructureSpec::parse(r#"{"kind":"sparsity","mask":[[3,0],[3,1]]}"#).unwrap();
        assert_eq!(spec.build(&sys).unwrap().dims(), (2, 1));
        let spec = StructureSpec::parse(r#"{"kind":"nope"}"#).unwrap();
        assert!(matches!(spec.build(&sys), Err(FileError::UnknownKind(_))));
    }
}
