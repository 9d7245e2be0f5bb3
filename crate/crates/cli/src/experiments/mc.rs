//! Acceptance-rule comparisons: exact on a finite ring, by simulation for GHMC.

use nonrev_core::finite::{var_lambda, var_lambda_cycle, verify_ordering_theorem, Observable, ORDERING_TOL};
use nonrev_core::zoo::{
    lift_distribution, lift_observable, metropolized_flow_finite, velocity_flip, velocity_refresh,
    two_cycle_variance_experiment, AcceptanceRule, FlowMap, RingTarget,
};
use nonrev_mc::compare::{compare_acceptance_rules, CompareConfig, GhmcSettings, PositionObservable};
use nonrev_mc::hamiltonian::refresh_sign_witnesses;
use nonrev_mc::target::TargetSpec;
use serde::Deserialize;

use crate::config::{check_discrete_lambdas, default_lambdas, require, ExperimentConfig};
use crate::error::{Error, Result};
use crate::output::Report;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GhmcParams {
    target: TargetSpec,
    step: f64,
    nleap: usize,
    omega: f64,
    sigma2: f64,
    lambdas: Vec<f64>,
    observables: Vec<String>,
    replicates: usize,
    steps: usize,
    burn_in: usize,
    ring_weights: Vec<f64>,
    refresh: f64,
    finite_lambdas: Vec<f64>,
    trials: usize,
}

impl Default for GhmcParams {
    fn default() -> Self {
        Self {
            target: TargetSpec::Gaussian { sigma: vec![1.0] },
            step: 0.9,
            nleap: 3,
            omega: std::f64::consts::FRAC_PI_4,
            sigma2: 1.0,
            lambdas: vec![0.5, 0.9],
            observables: vec!["x^2".into(), "|x|".into()],
            replicates: 16,
            steps: 1_000_000,
            burn_in: 1_000,
            ring_weights: vec![1.0, 3.0, 2.0, 5.0, 1.0, 4.0],
            refresh: 0.3,
            finite_lambdas: default_lambdas(),
            trials: 200,
        }
    }
}

fn observable(name: &str) -> Result<PositionObservable> {
    match name {
        "x" => Ok(PositionObservable::identity()),
        "x^2" => Ok(PositionObservable::square()),
        "|x|" => Ok(PositionObservable::abs()),
        other => Err(Error::Config(format!("unknown observable {other:?}; expected x, x^2 or |x|"))),
    }
}

pub fn ghmc_phi_compare(config: &ExperimentConfig) -> Result<Report> {
    let p: GhmcParams = config.params()?;
    check_discrete_lambdas(&p.lambdas)?;
    check_discrete_lambdas(&p.finite_lambdas)?;
    require(p.omega > 0.0 && p.omega <= std::f64::consts::FRAC_PI_2, || format!("omega {} outside (0, pi/2]", p.omega))?;
    require(p.step > 0.0 && p.step.is_finite() && p.nleap > 0, || "step and nleap must be positive".into())?;
    require(p.sigma2 > 0.0 && p.sigma2.is_finite(), || format!("sigma2 {}", p.sigma2))?;
    require(p.replicates >= nonrev_mc::estimate::MIN_REPLICATES, || {
        format!("{} replicates; at least {} are needed", p.replicates, nonrev_mc::estimate::MIN_REPLICATES)
    })?;
    require(p.steps >= 2 && p.trials > 0, || "steps and trials must be positive".into())?;
    require((0.0..=1.0).contains(&p.refresh), || format!("refresh probability {}", p.refresh))?;
    let observables = p.observables.iter().map(|o| observable(o)).collect::<Result<Vec<_>>>()?;
    require(!observables.is_empty(), || "no observables".into())?;
    let potential = p.target.potential().map_err(|e| Error::Config(e.to_string()))?;
    let ring = RingTarget::new(p.ring_weights.clone()).map_err(|e| Error::Config(e.to_string()))?;
    let mut report = Report::new(&config.experiment, config.seed);

    // Exact part: metropolized ring shift under both rules.
    let n = ring.len();
    let mu = lift_distribution(ring.pi());
    let q = velocity_flip(n);
    let psi = FlowMap::ring_shift(n);
    let metropolis = metropolized_flow_finite(&mu, &psi, &q, &AcceptanceRule::Metropolis)?;
    let barker = metropolized_flow_finite(&mu, &psi, &q, &AcceptanceRule::Barker)?;
    let out = verify_ordering_theorem(&metropolis, &barker, &mu, &q, &p.finite_lambdas, p.trials, config.seed)?;
    report.check("finite flow: metropolis <= barker", out.max_violation_plus, ORDERING_TOL);
    report.check("finite flow: metropolis >= barker for Qf = -f", out.max_violation_minus, ORDERING_TOL);
    let refresh = velocity_refresh(n, p.refresh)?;
    let mean = ring.pi().expectation(&Observable::from_fn(n, |x| x as f64)?)?;
    let f = lift_observable(&Observable::from_fn(n, |x| (x as f64 - mean).powi(2))?);
    let cycle = two_cycle_variance_experiment(&refresh, &metropolis, &refresh, &barker, &mu, &q, &f, &p.finite_lambdas)?;
    report.check("finite flow with refreshment: metropolis <= barker", cycle.max_violation, ORDERING_TOL);
    for &lambda in &p.finite_lambdas {
        let m = var_lambda(&f, &metropolis, &mu, lambda)?;
        let b = var_lambda(&f, &barker, &mu, lambda)?;
        report.exact("finite metropolis f=(x-m)^2", Some(lambda), m, m <= b + ORDERING_TOL);
        report.exact("finite barker f=(x-m)^2", Some(lambda), b, true);
        let m = var_lambda_cycle(&f, &refresh, &metropolis, &mu, lambda)?;
        let b = var_lambda_cycle(&f, &refresh, &barker, &mu, lambda)?;
        report.exact("finite refresh+metropolis f=(x-m)^2", Some(lambda), m, m <= b + ORDERING_TOL);
        report.exact("finite refresh+barker f=(x-m)^2", Some(lambda), b, true);
    }

    // Simulation part: GHMC with common random numbers across rules.
    let settings = GhmcSettings { step: p.step, nleap: p.nleap, omega: p.omega, sigma2: p.sigma2 };
    let compare = compare_acceptance_rules(&CompareConfig {
        potential,
        settings,
        rules: vec![AcceptanceRule::Metropolis, AcceptanceRule::Barker],
        observables,
        lambdas: p.lambdas.clone(),
        replicates: p.replicates,
        steps: p.steps,
        burn_in: p.burn_in,
        seed: config.seed,
    })?;
    for e in &compare.estimates {
        let s = &e.stats;
        let case = format!("ghmc {} f={}", e.rule, e.observable);
        report.row(case.clone(), Some(s.lambda), s.estimate, s.se, None, true);
        report.chain(case, s.lambda, s.estimate, s.se, s.replicates, s.steps);
    }
    for c in &compare.checks {
        let pass = c.difference >= -2.0 * c.combined_se;
        report.row(format!("ghmc {} - {} f={}", c.worse, c.better, c.observable), Some(c.lambda), c.difference, c.combined_se, None, pass);
        report.check(
            format!("ghmc f={} lambda={}: {} <= {} + 2 se", c.observable, c.lambda, c.better, c.worse),
            -c.difference,
            2.0 * c.combined_se,
        );
    }
    for (rule, rate) in &compare.acceptance {
        report.meta(&format!("acceptance rate {rule}"), rate);
    }
    report.meta("ghmc settings", settings);

    // Full against partial momentum refreshment: two witnesses of opposite sign, no ordering claimed.
    let (g1, g2) = refresh_sign_witnesses(p.sigma2, p.omega);
    report.exact("refresh witness g=v", None, g1, true);
    report.exact("refresh witness g=v^2", None, g2, true);
    Ok(report)
}
