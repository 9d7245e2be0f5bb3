//! Paired comparison of acceptance rules inside generalized HMC.
//!
//! All rules in a replicate consume the same random stream: the momentum
//! refreshments and the acceptance uniforms are drawn in the same order by
//! every chain, so differences between rules are estimated with common
//! random numbers.

use std::sync::Arc;

use nonrev_core::potential::Potential;
use nonrev_core::rng;
use nonrev_core::zoo::AcceptanceRule;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{default_max_lag, var_lambda_grid, ChainStats, MIN_REPLICATES};
use crate::hamiltonian::{ghmc_step, validate_omega, PhaseState, SeparableHamiltonian};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GhmcSettings {
    pub step: f64,
    pub nleap: usize,
    /// Refresh angle in `(0, pi/2]`.
    pub omega: f64,
    /// Momentum variance.
    pub sigma2: f64,
}

/// Function of the first position coordinate, lifted to phase space.
#[derive(Debug, Clone)]
pub struct PositionObservable {
    pub name: String,
    pub f: fn(f64) -> f64,
}

impl PositionObservable {
    pub fn square() -> Self {
        Self { name: "x^2".into(), f: |x| x * x }
    }

    pub fn abs() -> Self {
        Self { name: "|x|".into(), f: f64::abs }
    }

    pub fn identity() -> Self {
        Self { name: "x".into(), f: |x| x }
    }
}

#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub potential: Arc<dyn Potential>,
    pub settings: GhmcSettings,
    /// Rules in the expected order of increasing variance.
    pub rules: Vec<AcceptanceRule>,
    pub observables: Vec<PositionObservable>,
    pub lambdas: Vec<f64>,
    pub replicates: usize,
    pub steps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleEstimate {
    pub rule: String,
    pub observable: String,
    pub stats: ChainStats,
}

/// `worse - better >= -2 sqrt(se_better^2 + se_worse^2)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCheck {
    pub observable: String,
    pub lambda: f64,
    pub better: String,
    pub worse: String,
    pub difference: f64,
    pub combined_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub estimates: Vec<RuleEstimate>,
    pub checks: Vec<PairCheck>,
    /// Mean acceptance rate per rule.
    pub acceptance: Vec<(String, f64)>,
    pub pass: bool,
}

impl CompareReport {
    pub fn estimate(&self, rule: &str, observable: &str, lambda: f64) -> Option<&ChainStats> {
        self.estimates
            .iter()
            .find(|e| e.rule == rule && e.observable == observable && e.stats.lambda == lambda)
            .map(|e| &e.stats)
    }
}

struct ReplicateOutput {
    /// `[rule][observable] -> (estimates per lambda, autocovariances)`.
    per_rule: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
    acceptance: Vec<f64>,
}

fn run_rule(
    config: &CompareConfig,
    h: &SeparableHamiltonian,
    rule: &AcceptanceRule,
    replicate: usize,
) -> Result<(Vec<(Vec<f64>, Vec<f64>)>, f64)> {
    let s = &config.settings;
    let mut gen = rng::stream(config.seed, replicate as u64);
    let d = h.dim();
    let v0: Vec<f64> = (0..d).map(|_| s.sigma2.sqrt() * gen.sample::<f64, _>(StandardNormal)).collect();
    let mut state = PhaseState::new(vec![0.0; d], v0)?;
    for _ in 0..config.burn_in {
        state = ghmc_step(&state, h, s.step, s.nleap, s.omega, rule, &mut gen)?.state;
    }
    let mut traces = vec![Vec::with_capacity(config.steps); config.observables.len()];
    let mut accepted = 0usize;
    for _ in 0..config.steps {
        let out = ghmc_step(&state, h, s.step, s.nleap, s.omega, rule, &mut gen)?;
        accepted += out.accepted;
        state = out.state;
        for (trace, obs) in traces.iter_mut().zip(&config.observables) {
            trace.push((obs.f)(state.x[0]));
        }
    }
    let per_obs = traces
        .iter()
        .map(|t| var_lambda_grid(t, &config.lambdas))
        .collect::<Result<Vec<_>>>()?;
    Ok((per_obs, accepted as f64 / config.steps as f64))
}

/// Runs every rule on `replicates` paired streams and checks that each rule's
/// estimate is not below its predecessor's by more than two combined standard errors.
pub fn compare_acceptance_rules(config: &CompareConfig) -> Result<CompareReport> {
    let s = &config.settings;
    validate_omega(s.omega)?;
    if config.replicates < MIN_REPLICATES {
        return Err(Error::TooFewReplicates {
            found: config.replicates,
            required: MIN_REPLICATES,
        });
    }
    if config.rules.is_empty() || config.observables.is_empty() || config.lambdas.is_empty() {
        return Err(Error::InvalidParameter("rules, observables and lambdas must be non-empty".into()));
    }
    for rule in &config.rules {
        rule.validate()?;
    }
    let lags = config.lambdas.iter().map(|&l| default_max_lag(l)).collect::<Result<Vec<_>>>()?;
    let h = SeparableHamiltonian::new(config.potential.clone(), s.sigma2)?;

    let outputs = rng::run_replicates(config.seed, config.replicates, |r, _| -> Result<ReplicateOutput> {
        let mut per_rule = Vec::with_capacity(config.rules.len());
        let mut acceptance = Vec::with_capacity(config.rules.len());
        for rule in &config.rules {
            let (obs, acc) = run_rule(config, &h, rule, r)?;
            per_rule.push(obs);
            acceptance.push(acc);
        }
        Ok(ReplicateOutput { per_rule, acceptance })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let reps = outputs.len() as f64;
    let mut estimates = Vec::new();
    for (ri, rule) in config.rules.iter().enumerate() {
        for (oi, obs) in config.observables.iter().enumerate() {
            for (li, &lambda) in config.lambdas.iter().enumerate() {
                let per_rep: Vec<f64> = outputs.iter().map(|o| o.per_rule[ri][oi].0[li]).collect();
                let mut acov = vec![0.0; lags[li] + 1];
                for o in &outputs {
                    for (m, a) in acov.iter_mut().zip(&o.per_rule[ri][oi].1) {
                        *m += a / reps;
                    }
                }
                estimates.push(RuleEstimate {
                    rule: rule.name(),
                    observable: obs.name.clone(),
                    stats: ChainStats::from_estimates(lambda, lags[li], acov, per_rep, config.steps)?,
                });
            }
        }
    }

    let find = |rule: &str, obs: &str, lambda: f64| {
        estimates
            .iter()
            .find(|e| e.rule == rule && e.observable == obs && e.stats.lambda == lambda)
            .map(|e| e.stats.clone())
            .expect("every combination was estimated")
    };
    let mut checks = Vec::new();
    for pair in config.rules.windows(2) {
        let (better, worse) = (pair[0].name(), pair[1].name());
        for obs in &config.observables {
            for &lambda in &config.lambdas {
                let (b, w) = (find(&better, &obs.name, lambda), find(&worse, &obs.name, lambda));
                let combined_se = (b.se * b.se + w.se * w.se).sqrt();
                let difference = w.estimate - b.estimate;
                checks.push(PairCheck {
                    observable: obs.name.clone(),
                    lambda,
                    better: better.clone(),
                    worse: worse.clone(),
                    difference,
                    combined_se,
                    pass: difference >= -2.0 * combined_se,
                });
            }
        }
    }
    let acceptance = config
        .rules
        .iter()
        .enumerate()
        .map(|(ri, rule)| (rule.name(), outputs.iter().map(|o| o.acceptance[ri]).sum::<f64>() / reps))
        .collect();
    let pass = checks.iter().all(|c| c.pass);
    Ok(CompareReport { estimates, checks, acceptance, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nonrev_core::potential::GaussianPotential;

    fn config(rules: Vec<AcceptanceRule>) -> CompareConfig {
        CompareConfig {
            potential: Arc::new(GaussianPotential::standard(1).unwrap()),
            settings: GhmcSettings { step: 1.2, nleap: 2, omega: std::f64::consts::FRAC_PI_4, sigma2: 1.0 },
            rules,
            observables: vec![PositionObservable::square()],
            lambdas: vec![0.5, 0.9],
            replicates: 16,
            steps: 20_000,
            burn_in: 500,
            seed: 4,
        }
    }

    #[test]
    fn identical_rules_agree_exactly() {
        let report = compare_acceptance_rules(&config(vec![AcceptanceRule::Barker, AcceptanceRule::Barker])).unwrap();
        assert!(report.pass);
        for c in &report.checks {
            assert_eq!(c.difference, 0.0);
        }
    }

    #[test]
    fn too_few_replicates() {
        let mut c = config(vec![AcceptanceRule::Metropolis]);
        c.replicates = 4;
        assert!(matches!(compare_acceptance_rules(&c), Err(Error::TooFewReplicates { .. })));
    }
}
