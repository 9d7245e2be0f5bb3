//! `Lg(x, v) = <∇_x g, v> + sum_k lambda_k(x, v) [R_k g - g](x, v)`.

use nonrev_core::potential::Potential;

use crate::error::{Error, Result};
use crate::function::PhaseFunction;
use crate::intensity::{channel_rates, IntensitySpec, Update};

/// Largest dimension for which `{-1, 1}^d` is enumerated.
pub const MAX_ENUMERATED_DIM: usize = 16;

/// All velocities in `{-1, 1}^d`.
pub fn velocities(d: usize) -> Result<Vec<Vec<f64>>> {
    if d > MAX_ENUMERATED_DIM {
        return Err(Error::DimensionTooLarge { found: d, limit: MAX_ENUMERATED_DIM });
    }
    Ok((0..1usize << d)
        .map(|mask| (0..d).map(|j| if (mask >> j) & 1 == 1 { -1.0 } else { 1.0 }).collect())
        .collect())
}

/// `(R g)(x, v)` for one velocity update.
pub fn apply_update(update: Update, g: &PhaseFunction, x: &[f64], v: &[f64]) -> Result<f64> {
    match update {
        Update::Flip(i) => {
            let mut w = v.to_vec();
            w[i] = -w[i];
            Ok(g.value(x, &w))
        }
        Update::Resample => {
            let all = velocities(v.len())?;
            Ok(all.iter().map(|w| g.value(x, w)).sum::<f64>() / all.len() as f64)
        }
    }
}

pub(crate) fn check_state(pot: &dyn Potential, spec: &IntensitySpec, x: &[f64], v: &[f64]) -> Result<()> {
    let d = pot.dim();
    for found in [x.len(), v.len()] {
        if found != d {
            return Err(Error::DimensionMismatch { expected: d, found });
        }
    }
    spec.check_dim(d)?;
    Ok(())
}

pub fn generator_apply(
    pot: &dyn Potential,
    spec: &IntensitySpec,
    g: &PhaseFunction,
    x: &[f64],
    v: &[f64],
) -> Result<f64> {
    check_state(pot, spec, x, v)?;
    let drift: f64 = g.grad_x(x, v).iter().zip(v).map(|(a, b)| a * b).sum();
    let here = g.value(x, v);
    let mut jumps = 0.0;
    for (update, rate) in channel_rates(spec, pot, x, v) {
        if rate != 0.0 {
            jumps += rate * (apply_update(update, g, x, v)? - here);
        }
    }
    Ok(drift + jumps)
}
