//! Continuous-time variance estimators from simulated trajectories.
//!
//! For `lambda > 0` the target is `var_lambda = 2 ∫_0^∞ e^{-lambda t} C(t) dt`
//! with `C` the stationary autocovariance of `f`. The trajectory is cut into
//! cells of width `dt = min(mean inter-event gap / 4, 0.1)`, each replaced by
//! its exact time average; with `gamma_k` the biased autocovariances of the
//! cell averages, the estimate is the trapezoid sum
//! `dt (gamma_0 + 2 sum_k e^{-lambda k dt} gamma_k)`, truncated once the
//! weight drops below `1e-8`. For `lambda = 0`, batch means with
//! `floor(sqrt(T))` batches estimate the asymptotic variance of
//! `T^{-1/2} ∫_0^T f`. A burn-in of `T / 10` is simulated and discarded.

use nonrev_core::potential::Potential;
use nonrev_core::rng;
use nonrev_core::stats::mean_and_se;
use nonrev_mc::estimate::{autocovariances, var_lambda_from_autocovariances, MIN_REPLICATES};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::PhaseFunction;
use crate::intensity::IntensitySpec;
use crate::simulate::{random_velocity, simulate_zigzag, SimulationOptions, ZigZagTrajectory};

pub const BURN_IN_FRACTION: f64 = 0.1;
/// Largest grid cell for the discounted estimator.
pub const MAX_CELL: f64 = 0.1;
const TRUNCATION: f64 = 1e-8;

fn require_events(traj: &ZigZagTrajectory) -> Result<()> {
    if traj.events.len() < 2 {
        return Err(Error::DegenerateTrajectory { events: traj.events.len() });
    }
    Ok(())
}

/// Batch-means estimate of the asymptotic variance with `floor(sqrt(T))` batches.
pub fn batch_means(traj: &ZigZagTrajectory, f: &PhaseFunction) -> Result<f64> {
    require_events(traj)?;
    let batches = traj.horizon.sqrt().floor() as usize;
    if batches < 2 {
        return Err(Error::InvalidParameter(format!("horizon {} gives fewer than 2 batches", traj.horizon)));
    }
    let width = traj.horizon / batches as f64;
    let means: Vec<f64> = traj.window_integrals(f, 0.0, width, batches).iter().map(|s| s / width).collect();
    let overall = means.iter().sum::<f64>() / batches as f64;
    let spread = means.iter().map(|m| (m - overall).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Ok(width * spread)
}

/// Grid used by [`discounted_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridChoice {
    pub dt: f64,
    pub max_lag: usize,
}

/// `dt = min(T / (events + 1) / 4, 0.1)`.
pub fn grid_cell(traj: &ZigZagTrajectory) -> f64 {
    (traj.horizon / (traj.events.len() + 1) as f64 / 4.0).min(MAX_CELL)
}

/// Discounted estimate of `2 ∫ e^{-lambda t} C(t) dt` for `lambda > 0`.
pub fn discounted_grid(traj: &ZigZagTrajectory, f: &PhaseFunction, lambda: f64) -> Result<(f64, GridChoice)> {
    require_events(traj)?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("grid estimator needs lambda > 0, got {lambda}")));
    }
    let dt = grid_cell(traj);
    let cells = (traj.horizon / dt).floor() as usize;
    let max_lag = ((1.0 / TRUNCATION).ln() / (lambda * dt)).floor() as usize + 1;
    if cells < 10 * max_lag {
        return Err(nonrev_mc::Error::ChainTooShort { len: cells, required: 10 * max_lag }.into());
    }
    let averages: Vec<f64> = traj.window_integrals(f, 0.0, dt, cells).iter().map(|s| s / dt).collect();
    let acov = autocovariances(&averages, max_lag);
    let value = dt * var_lambda_from_autocovariances(&acov, (-lambda * dt).exp(), max_lag);
    Ok((value, GridChoice { dt, max_lag }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Discretization {
    BatchMeans { batches: usize },
    /// Cell width averaged over replicates and the largest lag used.
    Grid { mean_dt: f64, max_lag: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousStats {
    pub lambda: f64,
    pub estimate: f64,
    pub se: f64,
    pub replicates: usize,
    pub horizon: f64,
    pub estimates: Vec<f64>,
    pub mean_events: f64,
    pub discretization: Discretization,
}

#[derive(Debug, Clone)]
pub struct ContinuousConfig {
    pub horizon: f64,
    pub replicates: usize,
    pub lambda: f64,
    pub seed: u64,
    /// Start of the burn-in; the origin by default.
    pub start: Option<Vec<f64>>,
    pub options: SimulationOptions,
}

impl ContinuousConfig {
    pub fn new(horizon: f64, replicates: usize, lambda: f64, seed: u64) -> Self {
        Self { horizon, replicates, lambda, seed, start: None, options: SimulationOptions::default() }
    }
}

/// Burn-in followed by a trajectory of length `horizon`, for replicate `r`.
pub fn stationary_trajectory(
    pot: &dyn Potential,
    spec: &IntensitySpec,
    config: &ContinuousConfig,
    rng: &mut rng::StreamRng,
) -> Result<ZigZagTrajectory> {
    let d = pot.dim();
    let x0 = config.start.clone().unwrap_or_else(|| vec![0.0; d]);
    let v0 = random_velocity(d, rng);
    let burn = simulate_zigzag(pot, spec, &x0, &v0, BURN_IN_FRACTION * config.horizon, &config.options, rng)?;
    let (x, v) = burn.final_state();
    simulate_zigzag(pot, spec, &x, &v, config.horizon, &config.options, rng)
}

pub fn estimate_var_continuous(
    pot: &dyn Potential,
    spec: &IntensitySpec,
    f: &PhaseFunction,
    config: &ContinuousConfig,
) -> Result<ContinuousStats> {
    if config.replicates < MIN_REPLICATES {
        return Err(nonrev_mc::Error::TooFewReplicates { found: config.replicates, required: MIN_REPLICATES }.into());
    }
    if !(config.lambda.is_finite() && config.lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda = {}", config.lambda)));
    }
    let results = rng::run_replicates(config.seed, config.replicates, |_, mut gen| -> Result<(f64, usize, Option<GridChoice>)> {
        let traj = stationary_trajectory(pot, spec, config, &mut gen)?;
        if config.lambda == 0.0 {
            Ok((batch_means(&traj, f)?, traj.events.len(), None))
        } else {
            let (value, grid) = discounted_grid(&traj, f, config.lambda)?;
            Ok((value, traj.events.len(), Some(grid)))
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let estimates: Vec<f64> = results.iter().map(|r| r.0).collect();
    let (estimate, se) = mean_and_se(&estimates);
    let reps = results.len() as f64;
    let discretization = if config.lambda == 0.0 {
        Discretization::BatchMeans { batches: config.horizon.sqrt().floor() as usize }
    } else {
        let grids: Vec<GridChoice> = results.iter().filter_map(|r| r.2).collect();
        Discretization::Grid {
            mean_dt: grids.iter().map(|g| g.dt).sum::<f64>() / reps,
            max_lag: grids.iter().map(|g| g.max_lag).max().unwrap_or(0),
        }
    };
    Ok(ContinuousStats {
        lambda: config.lambda,
        estimate,
        se,
        replicates: results.len(),
        horizon: config.horizon,
        mean_events: results.iter().map(|r| r.1 as f64).sum::<f64>() / reps,
        estimates,
        discretization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::Polynomial;
    use nonrev_core::potential::GaussianPotential;

    #[test]
    fn constant_observable_has_zero_batch_variance() {
        let pot = GaussianPotential::standard(1).unwrap();
        let f = PhaseFunction::from(Polynomial::constant(1, 2.5));
        let config = ContinuousConfig::new(400.0, 16, 0.0, 1);
        let stats = estimate_var_continuous(&pot, &IntensitySpec::canonical(), &f, &config).unwrap();
        assert!(stats.estimate.abs() < 1e-20);
    }

    #[test]
    fn degenerate_trajectory_errors() {
        let pot = nonrev_core::potential::FlatPotential { d: 1 };
        let f = PhaseFunction::from(Polynomial::coordinate_power(1, 0, 1));
        let config = ContinuousConfig::new(100.0, 16, 0.5, 1);
        let err = estimate_var_continuous(&pot, &IntensitySpec::canonical(), &f, &config);
        assert!(matches!(err, Err(Error::DegenerateTrajectory { events: 0 })));
    }

    #[test]
    fn too_few_replicates() {
        let pot = GaussianPotential::standard(1).unwrap();
        let f = PhaseFunction::from(Polynomial::coordinate_power(1, 0, 1));
        let config = ContinuousConfig::new(100.0, 4, 0.5, 1);
        assert!(estimate_var_continuous(&pot, &IntensitySpec::canonical(), &f, &config).is_err());
    }
}
