//! Continuous-state samplers and empirical estimates of discounted asymptotic
//! variances.
//!
//! * [`hamiltonian`]: leapfrog flows, generalized HMC with partial momentum
//!   refreshment, and the extra-chance acceptance stage.
//! * [`guided`]: the guided random walk on the line.
//! * [`chain`]: simulation of finite transition matrices.
//! * [`estimate`]: autocovariances and plug-in `var_lambda` estimates with
//!   replicate standard errors.
//! * [`compare`]: paired comparisons of acceptance rules.
//! * [`target`]: named target specifications.
//!
//! Random numbers come from [`nonrev_core::rng`]: replicate `r` of a run with
//! seed `s` always consumes ChaCha8 stream `r` under key `s`.

pub mod chain;
pub mod compare;
pub mod error;
pub mod estimate;
pub mod guided;
pub mod hamiltonian;
pub mod target;

pub use error::{Error, Result};
