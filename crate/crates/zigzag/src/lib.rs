//! Zig-Zag piecewise deterministic process on `R^d x {-1, 1}^d`.
//!
//! * [`phi`]: the Gaussian-smoothed Metropolis acceptance function `phi_eps`.
//! * [`intensity`]: switching intensities and refreshment specifications.
//! * [`function`]: observables on phase space and their segment integrals.
//! * [`simulate`]: event-driven simulation by exact inversion or thinning.
//! * [`generator`]: pointwise generator evaluation.
//! * [`quadrature`]: Gauss–Hermite/trapezoid checks of stationarity and of
//!   Dirichlet-form gaps between two processes.
//! * [`estimate`]: continuous-time variance estimators from trajectories.

pub mod error;
pub mod estimate;
pub mod function;
pub mod generator;
pub mod intensity;
pub mod phi;
pub mod quadrature;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
