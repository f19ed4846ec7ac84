//! Finite-element solvers for the Cahn-Hilliard equation with degenerate
//! mobility `M(phi) = phi (1 - phi)`.
//!
//! The two boundedness-preserving schemes discretize the mobility through
//! element-wise diagonal matrices built from difference quotients of the
//! convex functionals `G_eps` (with `G_eps'' = 1/M_eps`) and `J_eps` (with
//! `J_eps'' = 1/sqrt(M_eps)`). A pointwise-`M0` scheme and a
//! constant-mobility scheme are provided for comparison.

pub mod commands;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fespace;
pub mod initial;
pub mod linalg;
pub mod mesh;
pub mod mobility;
pub mod par;
pub mod potentials;
pub mod schemes;
pub mod simulation;
pub mod sparse;

pub use config::RunConfig;
pub use diagnostics::SeriesRecord;
pub use error::{Error, Result};
pub use fespace::{ElementDiagCoeff, FeSpace, NodalField};
pub use mesh::StructuredMesh;
pub use mobility::Truncation;
pub use potentials::Potential;
pub use schemes::{Scheme, SchemeParams, StepReport, Stepper};
pub use simulation::{run_simulation, RunOptions, RunOutcome, RunStatus};
