//! Structured passivation and distance to non-passivity for LTI state-space
//! systems via two-level Hamiltonian eigenvalue optimization.
//!
//! The library revolves around two problems on a real system `(A, B, C, D)`:
//!
//! * **Enforcement** — move the Hamiltonian eigenvalues of a perturbed
//!   system at least `delta` away from the imaginary axis with a locally
//!   minimal structured perturbation.
//! * **Radius** — for a passive system, find the smallest structured
//!   perturbation that brings a Hamiltonian eigenvalue onto the axis
//!   (stopping at distance `delta` in practice).
//!
//! Both run an inner norm-constrained gradient flow over unit-norm
//! perturbation directions at fixed size `eps` ([`flow`], [`lowrank`]) and an
//! outer scalar root-finding iteration over `eps` itself ([`outer`]).

pub mod eigen;
pub mod fileio;
pub mod flow;
pub mod gradient;
pub mod linalg;
pub mod lowrank;
pub mod outer;
pub mod structure;
pub mod system;

pub use eigen::EigenTriple;
pub use flow::{FlowConfig, FlowDirection, FlowResult};
pub use gradient::{ConstraintThresholds, GradientBundle};
pub use lowrank::RankRFactor;
pub use outer::{OuterConfig, OuterMode, PassivationResult, Problem};
pub use structure::{GramianFactor, PerturbationStructure};
pub use system::{ExtendedPencil, HamiltonianMatrix, RealnessMode, StateSpaceSystem};
