//! Plug-in estimates of `var_lambda = gamma_0 + 2 sum_{k>=1} lambda^k gamma_k`
//! from simulated chains, with standard errors from independent replicates.

use nonrev_core::stats::mean_and_se;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};

/// Fewest replicates accepted for a standard error.
pub const MIN_REPLICATES: usize = 16;

/// Truncation weight below which autocovariance terms are dropped.
const TRUNCATION: f64 = 1e-8;

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && (0.0..1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::InvalidLambda { lambda })
    }
}

/// Smallest `K` with `lambda^K < 1e-8`.
pub fn default_max_lag(lambda: f64) -> Result<usize> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Ok(1);
    }
    Ok((TRUNCATION.ln() / lambda.ln()).floor() as usize + 1)
}

/// Biased autocovariances `gamma_k = n^{-1} sum_{t < n-k} (y_t - ybar)(y_{t+k} - ybar)`
/// for `k = 0..=max_lag`, by zero-padded FFT.
pub fn autocovariances(chain: &[f64], max_lag: usize) -> Vec<f64> {
    let n = chain.len();
    if n == 0 {
        return vec![0.0; max_lag + 1];
    }
    let mean = chain.iter().sum::<f64>() / n as f64;
    let size = (n + max_lag + 1).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = chain
        .iter()
        .map(|&y| Complex::new(y - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64);
    (0..=max_lag).map(|k| if k < n { buf[k].re * scale } else { 0.0 }).collect()
}

/// `gamma_0 + 2 sum_{k=1}^{K} lambda^k gamma_k` from precomputed autocovariances.
pub fn var_lambda_from_autocovariances(acov: &[f64], lambda: f64, max_lag: usize) -> f64 {
    let mut total = acov[0];
    let mut weight = 1.0;
    for gamma in acov.iter().take(max_lag + 1).skip(1) {
        weight *= lambda;
        total += 2.0 * weight * gamma;
    }
    total
}

fn check_length(len: usize, max_lag: usize) -> Result<()> {
    let required = 10 * max_lag;
    if len < required || len == 0 {
        return Err(Error::ChainTooShort { len, required });
    }
    Ok(())
}

/// Plug-in estimate from a single chain; `max_lag` defaults to [`default_max_lag`].
pub fn var_lambda_single(chain: &[f64], lambda: f64, max_lag: Option<usize>) -> Result<f64> {
    let max_lag = match max_lag {
        Some(k) => k,
        None => default_max_lag(lambda)?,
    };
    check_lambda(lambda)?;
    check_length(chain.len(), max_lag)?;
    let acov = autocovariances(chain, max_lag);
    Ok(var_lambda_from_autocovariances(&acov, lambda, max_lag))
}

/// Plug-in estimates for several discount factors sharing one autocovariance pass.
/// Returns the estimates and the autocovariances up to the largest lag used.
pub fn var_lambda_grid(chain: &[f64], lambdas: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let lags = lambdas.iter().map(|&l| default_max_lag(l)).collect::<Result<Vec<_>>>()?;
    let max_lag = lags.iter().copied().max().unwrap_or(1);
    check_length(chain.len(), max_lag)?;
    let acov = autocovariances(chain, max_lag);
    let estimates = lambdas
        .iter()
        .zip(&lags)
        .map(|(&l, &k)| var_lambda_from_autocovariances(&acov, l, k))
        .collect();
    Ok((estimates, acov))
}

/// Replicate summary of a `var_lambda` estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainStats {
    pub lambda: f64,
    pub max_lag: usize,
    /// Autocovariances averaged over replicates, lags `0..=max_lag`.
    pub autocovariances: Vec<f64>,
    pub estimates: Vec<f64>,
    pub estimate: f64,
    pub se: f64,
    pub replicates: usize,
    pub steps: usize,
}

impl ChainStats {
    /// Requires at least [`MIN_REPLICATES`] per-replicate estimates.
    pub fn from_estimates(
        lambda: f64,
        max_lag: usize,
        autocovariances: Vec<f64>,
        estimates: Vec<f64>,
        steps: usize,
    ) -> Result<Self> {
        if estimates.len() < MIN_REPLICATES {
            return Err(Error::TooFewReplicates {
                found: estimates.len(),
                required: MIN_REPLICATES,
            });
        }
        let (estimate, se) = mean_and_se(&estimates);
        Ok(Self {
            lambda,
            max_lag,
            autocovariances,
            replicates: estimates.len(),
            estimates,
            estimate,
            se,
            steps,
        })
    }
}

/// Estimate and replicate standard error from independent chains of equal length.
pub fn estimate_var_lambda(chains: &[Vec<f64>], lambda: f64, max_lag: Option<usize>) -> Result<ChainStats> {
    if chains.len() < MIN_REPLICATES {
        return Err(Error::TooFewReplicates {
            found: chains.len(),
            required: MIN_REPLICATES,
        });
    }
    let max_lag = match max_lag {
        Some(k) => k,
        None => default_max_lag(lambda)?,
    };
    check_lambda(lambda)?;
    let mut mean_acov = vec![0.0; max_lag + 1];
    let mut estimates = Vec::with_capacity(chains.len());
    for chain in chains {
        check_length(chain.len(), max_lag)?;
        let acov = autocovariances(chain, max_lag);
        for (m, a) in mean_acov.iter_mut().zip(&acov) {
            *m += a / chains.len() as f64;
        }
        estimates.push(var_lambda_from_autocovariances(&acov, lambda, max_lag));
    }
    let steps = chains[0].len();
    ChainStats::from_estimates(lambda, max_lag, mean_acov, estimates, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nonrev_core::rng;
    use rand::Rng;

    /// Direct O(nK) oracle.
    fn direct_autocov(chain: &[f64], max_lag: usize) -> Vec<f64> {
        let n = chain.len();
        let mean = chain.iter().sum::<f64>() / n as f64;
        (0..=max_lag)
            .map(|k| (0..n.saturating_sub(k)).map(|t| (chain[t] - mean) * (chain[t + k] - mean)).sum::<f64>() / n as f64)
            .collect()
    }

    #[test]
    fn fft_matches_direct_sum() {
        let mut gen = rng::stream(1, 0);
        let chain: Vec<f64> = (0..1537).map(|_| gen.random::<f64>()).collect();
        let fft = autocovariances(&chain, 40);
        let direct = direct_autocov(&chain, 40);
        for (a, b) in fft.iter().zip(&direct) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn default_lags() {
        assert_eq!(default_max_lag(0.0).unwrap(), 1);
        let k = default_max_lag(0.5).unwrap();
        assert!(0.5f64.powi(k as i32) < 1e-8 && 0.5f64.powi(k as i32 - 1) >= 1e-8);
        assert!(default_max_lag(1.0).is_err());
    }

    #[test]
    fn lambda_zero_is_sample_variance() {
        let mut gen = rng::stream(2, 0);
        let chain: Vec<f64> = (0..1000).map(|_| gen.random::<f64>()).collect();
        let est = var_lambda_single(&chain, 0.0, None).unwrap();
        assert_abs_diff_eq!(est, direct_autocov(&chain, 0)[0], epsilon = 1e-12);
    }

    #[test]
    fn iid_bias_vanishes() {
        let mut gen = rng::stream(3, 0);
        let chain: Vec<f64> = (0..400_000).map(|_| gen.random::<f64>()).collect();
        let est = var_lambda_single(&chain, 0.9, None).unwrap();
        let gamma0 = direct_autocov(&chain, 0)[0];
        assert!((est - gamma0).abs() < 0.01 * gamma0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            var_lambda_single(&[1.0; 50], 0.5, Some(10)),
            Err(Error::ChainTooShort { len: 50, required: 100 })
        ));
        let chains = vec![vec![0.0; 100]; 15];
        assert!(matches!(
            estimate_var_lambda(&chains, 0.5, Some(2)),
            Err(Error::TooFewReplicates { found: 15, .. })
        ));
    }
}
