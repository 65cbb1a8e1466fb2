//! Numerical laboratory for cross-diffusion parabolic systems
//! `W_t = Div(A(W) DW) + g(W)` on boxes and slabs.
//!
//! - [`mesh`]: cell-centered grids, ghost-cell boundary conditions, discrete calculus.
//! - [`models`]: diffusion-tensor and reaction families.
//! - [`dynamics`]: explicit time integration with blow-up detection.
//! - [`functionals`]: norms, energies, Levine potentials, BMO, eigenpairs.
//! - [`certificates`]: blow-up sufficient conditions and inequality falsification.
//! - [`exact`]: closed-form solutions and residual checks.
//! - [`scenario`]: config files, batch runs and sweeps.

pub mod error;
pub mod mesh;
pub mod models;
pub mod functionals;
pub mod dynamics;
pub mod certificates;
pub mod exact;
pub mod scenario;

pub use error::{Error, Result};

/// Work items below which parallel loops stay on the calling thread.
pub(crate) const PAR_MIN: usize = 2048;
