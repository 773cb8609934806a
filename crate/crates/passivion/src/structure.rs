//! Structured-perturbation framework: the linear map `L` from perturbation
//! coordinates `dZ` in `R^{k x l}` to system-block perturbations in
//! `R^{(n+p) x (n+m)}`, its adjoint, and the Gramian-weighted C-only
//! structure together with the Lyapunov solve that produces its Cholesky
//! weight.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::solve_lyapunov;
use crate::system::{stability_margin, StateSpaceSystem};

#[derive(Debug, Error)]
pub enum StructureError {
    #[error("perturbation coordinates have wrong shape: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("state matrix is not stable (abscissa {abscissa:.3e}); controllability Gramian undefined")]
    UnstableA { abscissa: f64 },
    #[error("Gramian is not positive definite; system must be controllable")]
    GramianNotPositiveDefinite,
    #[error("sparsity mask entry ({row},{col}) outside the {rows}x{cols} block matrix")]
    MaskOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("sparsity mask is empty")]
    EmptyMask,
    #[error("perturbation is not in the range of the structure (residual {residual:.3e})")]
    NotInRange { residual: f64 },
    #[error(transparent)]
    Lyapunov(#[from] crate::linalg::LyapunovError),
    #[error("{0}")]
    System(#[from] crate::system::SystemError),
}

/// Controllability Gramian `G_c` (solution of `A G + G Aᵀ + B Bᵀ = 0`)
/// together with the upper-triangular factor `Q` satisfying `G_c = Qᵀ Q`.
#[derive(Debug, Clone)]
pub struct GramianFactor {
    pub gramian: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

/// Solves the controllability Lyapunov equation and extracts the Cholesky
/// factor in the `G_c = Qᵀ Q` convention (`Q` upper triangular with positive
/// diagonal).
pub fn controllability_gramian(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<GramianFactor, StructureError> {
    let abscissa = stability_margin(a)?;
    if abscissa >= 0.0 {
        return Err(StructureError::UnstableA { abscissa });
    }
    let w = b * b.transpose();
    let gramian = solve_lyapunov(a, &w)?;
    let chol = nalgebra::Cholesky::new(gramian.clone())
        .ok_or(StructureError::GramianNotPositiveDefinite)?;
    // nalgebra returns the lower factor L with G = L Lᵀ; Q = Lᵀ.
    let q = chol.l().transpose();
    Ok(GramianFactor { gramian, q })
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Full,
    GramianWeightedC,
    Sparsity(Vec<(usize, usize)>),
}

/// A linear map `L: R^{k x l} -> R^{(n+p) x (n+m)}` restricting which system
/// entries a perturbation may touch, with cached weighting data.
#[derive(Debug, Clone)]
pub struct PerturbationStructure {
    kind: Kind,
    n: usize,
    m: usize,
    p: usize,
    /// Upper-triangular Gramian factor (GramianWeightedC only).
    q: Option<DMatrix<f64>>,
}

impl PerturbationStructure {
    /// Unstructured perturbations: `L` is the identity on the full block
    /// matrix, `k = n+p`, `l = n+m`.
    pub fn full(n: usize, m: usize, p: usize) -> Self {
        Self {
            kind: Kind::Full,
            n,
            m,
            p,
            q: None,
        }
    }

    /// C-only perturbations weighted by the controllability Gramian factor:
    /// `L[dZ]` has `dZ Q^{-T}` in the C block and zeros elsewhere, so that
    /// `||dZ||_F = ||dC Qᵀ||_F`.
    pub fn gramian_weighted_c(sys: &StateSpaceSystem) -> Result<Self, StructureError> {
        let factor = controllability_gramian(sys.a(), sys.b())?;
        Ok(Self {
            kind: Kind::GramianWeightedC,
            n: sys.state_dim(),
            m: sys.input_dim(),
            p: sys.output_dim(),
            q: Some(factor.q),
        })
    }

    /// Perturbations restricted to a sparsity pattern over the block matrix.
    /// `dZ` is the vector of masked entries in sorted coordinate order
    /// (`k` = number of entries, `l` = 1).
    pub fn sparsity(
        n: usize,
        m: usize,
        p: usize,
        mask: &[(usize, usize)],
    ) -> Result<Self, StructureError> {
        if mask.is_empty() {
            return Err(StructureError::EmptyMask);
        }
        let mut sorted: Vec<(usize, usize)> = mask.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for &(row, col) in &sorted {
            if row >= n + p || col >= n + m {
                return Err(StructureError::MaskOutOfBounds {
                    row,
                    col,
                    rows: n + p,
                    cols: n + m,
                });
            }
        }
        Ok(Self {
            kind: Kind::Sparsity(sorted),
            n,
            m,
            p,
            q: None,
        })
    }

    /// `(k, l)` shape of the perturbation coordinates.
    pub fn dims(&self) -> (usize, usize) {
        match &self.kind {
            Kind::Full => (self.n + self.p, self.n + self.m),
            Kind::GramianWeightedC => (self.p, self.n),
            Kind::Sparsity(mask) => (mask.len(), 1),
        }
    }

    /// Ambient block-matrix shape `(n+p, n+m)`.
    pub fn ambient_dims(&self) -> (usize, usize) {
        (self.n + self.p, self.n + self.m)
    }

    pub fn gramian_factor(&self) -> Option<&DMatrix<f64>> {
        self.q.as_ref()
    }

    /// Whether the range of `L` touches the A block (resp. D block);
    /// used to decide which stability/feedthrough penalties can activate.
    pub fn perturbs_a(&self) -> bool {
        match &self.kind {
            Kind::Full => true,
            Kind::GramianWeightedC => false,
            Kind::Sparsity(mask) => mask.iter().any(|&(r, c)| r < self.n && c < self.n),
        }
    }

    pub fn perturbs_d(&self) -> bool {
        match &self.kind {
            Kind::Full => true,
            Kind::GramianWeightedC => false,
            Kind::Sparsity(mask) => mask.iter().any(|&(r, c)| r >= self.n && c >= self.n),
        }
    }

    /// Applies `L` to perturbation coordinates.
    pub fn apply(&self, dz: &DMatrix<f64>) -> Result<DMatrix<f64>, StructureError> {
        let (k, l) = self.dims();
        if dz.shape() != (k, l) {
            return Err(StructureError::DimensionMismatch {
                expected: (k, l),
                got: dz.shape(),
            });
        }
        let (rows, cols) = self.ambient_dims();
        match &self.kind {
            Kind::Full => Ok(dz.clone()),
            Kind::GramianWeightedC => {
                let q = self.q.as_ref().expect("gramian structure carries Q");
                // dC = dZ Q^{-T}: solve dC Qᵀ = dZ, i.e. Q dCᵀ = dZᵀ.
                let dc_t = q
                    .clone()
                    .lu()
                    .solve(&dz.transpose())
                    .expect("Q is invertible by construction");
                let mut out = DMatrix::zeros(rows, cols);
                out.view_mut((self.n, 0), (self.p, self.n))
                    .copy_from(&dc_t.transpose());
                Ok(out)
            }
            Kind::Sparsity(mask) => {
                let mut out = DMatrix::zeros(rows, cols);
                for (idx, &(r, c)) in mask.iter().enumerate() {
                    out[(r, c)] = dz[(idx, 0)];
                }
                Ok(out)
            }
        }
    }

    /// Applies the adjoint `L*` to an ambient block matrix.
    pub fn apply_adjoint(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>, StructureError> {
        if v.shape() != self.ambient_dims() {
            return Err(StructureError::DimensionMismatch {
                expected: self.ambient_dims(),
                got: v.shape(),
            });
        }
        match &self.kind {
            Kind::Full => Ok(v.clone()),
            Kind::GramianWeightedC => {
                let q = self.q.as_ref().expect("gramian structure carries Q");
                let v_c = v.view((self.n, 0), (self.p, self.n)).into_owned();
                // L*[V] = V_C Q^{-1}: solve X Q = V_C, i.e. Qᵀ Xᵀ = V_Cᵀ.
                let xt = q
                    .transpose()
                    .lu()
                    .solve(&v_c.transpose())
                    .expect("Q is invertible by construction");
                Ok(xt.transpose())
            }
            Kind::Sparsity(mask) => {
                let mut out = DMatrix::zeros(mask.len(), 1);
                for (idx, &(r, c)) in mask.iter().enumerate() {
                    out[(idx, 0)] = v[(r, c)];
                }
                Ok(out)
            }
        }
    }

    /// Inverts `L` on its range: recovers `dZ` from a block perturbation
    /// that is (approximately) of the form `L[dZ]`. Fails when the residual
    /// `||L[dZ] - dX||_F` exceeds `tol * ||dX||_F`.
    pub fn pullback(&self, dx: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>, StructureError> {
        if dx.shape() != self.ambient_dims() {
            return Err(StructureError::DimensionMismatch {
                expected: self.ambient_dims(),
                got: dx.shape(),
            });
        }
        let dz = match &self.kind {
            Kind::Full => dx.clone(),
            Kind::GramianWeightedC => {
                let q = self.q.as_ref().expect("gramian structure carries Q");
                let dc = dx.view((self.n, 0), (self.p, self.n)).into_owned();
                dc * q.transpose()
            }
            Kind::Sparsity(_) => self.apply_adjoint(dx)?,
        };
        let residual = (self.apply(&dz)? - dx).norm();
        if residual > tol * dx.norm().max(1e-300) {
            return Err(StructureError::NotInRange { residual });
        }
        Ok(dz)
    }
}
