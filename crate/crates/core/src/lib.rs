//! Semiclassical dynamics of a flux qubit inductively coupled to a
//! nanomechanical oscillator.
//!
//! The model is the mean-field (factorized) set of equations for the qubit
//! coherence `s_-`, the population `s_z` and the mechanical amplitude `alpha`
//! in the frame rotating with the `n`-photon drive:
//!
//! ```text
//! ds_-/dt  = -gamma2 s_- - i delta s_- + (i/2) Delta_n s_z - i g (alpha + alpha*) s_-
//! ds_z/dt  = -gamma1 (s_z - sigma_z_eq) + i Delta_n (s_- - s_+)
//! dalpha/dt = -i omega_m alpha - (gamma_m/2) alpha - (i/2) g s_z
//! ```
//!
//! All frequencies and rates share one unit (by default the drive angular
//! frequency `omega_d = 1`) and `hbar = 1`.
//!
//! Module map:
//!
//! * [`special`]: Bessel functions of the first kind.
//! * [`model`]: parameter types, rotating-frame derivation, equations of motion and Jacobian.
//! * [`linalg`]: small dense LU solve and a nonsymmetric eigenvalue solver.
//! * [`ode`]: adaptive Dormand–Prince 5(4) integrator with dense output.
//! * [`dynamics`]: trajectories, ring-down fits, limit-cycle measurement, steady-state classification.
//! * [`response`]: qubit linear response, renormalized mechanics and a forced-qubit numerical oracle.
//! * [`bifurcation`]: equilibria, stability, Hopf threshold, limit-cycle predictions, continuation.
//! * [`sweep`]: flux-space damping maps and response surfaces.
//! * [`fit`]: least-squares line fits used by the estimators.
//! * [`export`]: CSV / JSON writers for every data product.
//! * [`validation`]: the acceptance checks, shared by the test suite and the CLI `selftest`.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bifurcation;
pub mod dynamics;
mod error;
pub mod export;
pub mod fit;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod response;
pub mod special;
pub mod sweep;
pub mod validation;

pub use error::{Error, Result};
pub use model::{
    DerivedParams, DriveParams, MechanicalParams, Model, ModelConfig, PhysicalCouplingParams,
    QubitParams, SystemState,
};
pub use num_complex::Complex64;
