//! Named targets accepted by the experiment runner.

use std::sync::Arc;

use nonrev_core::potential::{DoubleWellPotential, GaussianPotential, Potential};
use nonrev_core::zoo::RingTarget;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `gaussian(sigma)`, `double-well(a, b)` or `ring(weights)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Centered Gaussian with per-coordinate standard deviations.
    Gaussian { sigma: Vec<f64> },
    /// `U(x) = sum a (x_i^2 - b)^2` in `dim` coordinates.
    DoubleWell {
        a: f64,
        b: f64,
        #[serde(default = "one")]
        dim: usize,
    },
    /// Unnormalized weights on the ring `Z_n`.
    Ring { weights: Vec<f64> },
}

fn one() -> usize {
    1
}

impl TargetSpec {
    /// Continuous potential; fails for ring targets.
    pub fn potential(&self) -> Result<Arc<dyn Potential>> {
        match self {
            TargetSpec::Gaussian { sigma } => Ok(Arc::new(GaussianPotential::new(sigma.iter().map(|s| s * s).collect())?)),
            TargetSpec::DoubleWell { a, b, dim } => Ok(Arc::new(DoubleWellPotential::new(*a, *b, *dim)?)),
            TargetSpec::Ring { .. } => Err(Error::InvalidParameter("ring target has no potential on R^d".into())),
        }
    }

    /// Finite ring target; fails for continuous targets.
    pub fn ring(&self) -> Result<RingTarget> {
        match self {
            TargetSpec::Ring { weights } => Ok(RingTarget::new(weights.clone())?),
            _ => Err(Error::InvalidParameter("target is not a ring".into())),
        }
    }
}
