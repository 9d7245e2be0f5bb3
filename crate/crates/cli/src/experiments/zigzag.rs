//! Zig-Zag experiments and the penalty acceptance function.

use nonrev_core::potential::{GaussianPotential, Potential};
use nonrev_core::rng;
use nonrev_core::stats::mean_and_se;
use nonrev_zigzag::estimate::{estimate_var_continuous, stationary_trajectory, ContinuousConfig, ContinuousStats};
use nonrev_zigzag::function::{polynomial_basis, PhaseFunction, Polynomial};
use nonrev_zigzag::intensity::{IntensityKind, IntensitySpec, RefreshMode};
use nonrev_zigzag::phi::PhiEps;
use nonrev_zigzag::quadrature::{dirichlet_gap_terms, stationarity_residual, Grid};
use nonrev_zigzag::simulate::{
    flip_time, gaussian_canonical_cumulative_rate, simulate_zigzag, EventMethod, SimulationOptions,
};
use nonrev_zigzag::stats::{ks_statistic, ks_threshold, two_sample_ks_statistic, two_sample_ks_threshold};
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use crate::config::{check_continuous_lambdas, require, ExperimentConfig};
use crate::error::{Error, Result};
use crate::output::Report;

/// Tolerance on `∫ Lg dmu`.
const STATIONARITY_TOL: f64 = 1e-6;
/// Tolerance below zero for a Dirichlet-form gap.
const GAP_TOL: f64 = 1e-8;

fn x_coordinate(dim: usize, i: usize) -> PhaseFunction {
    PhaseFunction::from(Polynomial::coordinate_power(dim, i, 1))
}

fn check_horizon(horizon: f64, replicates: usize) -> Result<()> {
    require(horizon.is_finite() && horizon > 1.0, || format!("horizon {horizon} must exceed 1"))?;
    require(replicates >= nonrev_mc::estimate::MIN_REPLICATES, || {
        format!("{replicates} replicates; at least {} are needed", nonrev_mc::estimate::MIN_REPLICATES)
    })
}

fn record(report: &mut Report, case: &str, stats: &ContinuousStats) {
    report.row(case, Some(stats.lambda), stats.estimate, stats.se, None, true);
    report.chain(case, stats.lambda, stats.estimate, stats.se, stats.replicates, format!("T={}", stats.horizon));
}

/// `estimate(a) <= estimate(b) + 2 combined se` for each rate, recorded as checks.
#[allow(clippy::too_many_arguments)]
fn empirical_ordering(
    report: &mut Report,
    pot: &GaussianPotential,
    better: (&str, &IntensitySpec),
    worse: (&str, &IntensitySpec),
    f: &PhaseFunction,
    horizon: f64,
    replicates: usize,
    lambdas: &[f64],
    seed: u64,
) -> Result<()> {
    for (k, &lambda) in lambdas.iter().enumerate() {
        // Both processes share the replicate streams of this rate.
        let config = ContinuousConfig::new(horizon, replicates, lambda, seed.wrapping_add(k as u64));
        let a = estimate_var_continuous(pot, better.1, f, &config)?;
        let b = estimate_var_continuous(pot, worse.1, f, &config)?;
        record(report, better.0, &a);
        record(report, worse.0, &b);
        report.meta(&format!("{} discretization lambda={lambda}", better.0), &a.discretization);
        report.meta(&format!("{} discretization lambda={lambda}", worse.0), &b.discretization);
        let combined = a.se.hypot(b.se);
        report.check(
            format!("lambda={lambda}: {} <= {} + 2 se", better.0, worse.0),
            a.estimate - b.estimate,
            2.0 * combined,
        );
    }
    Ok(())
}

/// `<g, -(L_better - L_worse) Q g>_mu` is nonnegative when `better` dominates.
/// Returns the smallest direct gap over the basis, and the largest disagreement between
/// the direct and decomposed evaluations relative to the integrand's size.
fn gap_over_basis(
    report: &mut Report,
    pot: &GaussianPotential,
    better: &IntensitySpec,
    worse: &IntensitySpec,
    basis: usize,
    grid: &Grid,
) -> Result<(f64, f64)> {
    let (mut lowest, mut mismatch) = (f64::INFINITY, 0.0_f64);
    for (k, g) in polynomial_basis(pot.dim(), basis).iter().enumerate() {
        let terms = dirichlet_gap_terms(pot, better, worse, g, grid)?;
        let gap = terms.direct.fine;
        lowest = lowest.min(gap);
        mismatch = mismatch.max((gap - terms.decomposed.fine).abs() / (1.0 + terms.direct.magnitude));
        report.exact(format!("dirichlet gap basis[{k}]"), None, gap, gap >= -GAP_TOL);
    }
    Ok((lowest, mismatch))
}

fn stationarity(pot: &GaussianPotential, specs: &[&IntensitySpec], count: usize, grid: &Grid) -> Result<f64> {
    let mut worst = 0.0_f64;
    for spec in specs {
        for g in polynomial_basis(pot.dim(), count) {
            worst = worst.max(stationarity_residual(pot, spec, &g, grid)?.abs());
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CorrectnessParams {
    horizon: f64,
    replicates: usize,
    ks_samples: usize,
    ks_start: [f64; 2],
    trajectory_samples: usize,
    trajectory_horizon: f64,
}

impl Default for CorrectnessParams {
    fn default() -> Self {
        Self {
            horizon: 1e5,
            replicates: 16,
            ks_samples: 100_000,
            ks_start: [-0.5, 1.0],
            trajectory_samples: 20_000,
            trajectory_horizon: 2.5,
        }
    }
}

pub fn zigzag_correctness(config: &ExperimentConfig) -> Result<Report> {
    let p: CorrectnessParams = config.params()?;
    check_horizon(p.horizon, p.replicates)?;
    require(p.ks_samples >= 100 && p.trajectory_samples >= 100, || "KS tests need at least 100 samples".into())?;
    require(p.ks_start[1].abs() == 1.0 && p.ks_start[0].is_finite(), || "ks_start must be [x, +-1]".into())?;
    require(p.trajectory_horizon > 0.0 && p.trajectory_horizon.is_finite(), || "trajectory_horizon must be positive".into())?;
    let pot = GaussianPotential::standard(1)?;
    let spec = IntensitySpec::canonical();
    let mut report = Report::new(&config.experiment, config.seed);

    let estimate = ContinuousConfig::new(p.horizon, p.replicates, 0.0, config.seed);
    let moments = rng::run_replicates(config.seed, p.replicates, |_, mut gen| -> Result<([f64; 4], f64, usize)> {
        let traj = stationary_trajectory(&pot, &spec, &estimate, &mut gen)?;
        let m = std::array::from_fn(|k| {
            traj.integral(&PhaseFunction::from(Polynomial::coordinate_power(1, 0, k as u32 + 1))) / traj.horizon
        });
        Ok((m, traj.reconstruction_error(), traj.events.len()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    for (k, target) in [0.0, 1.0, 0.0, 3.0].into_iter().enumerate() {
        let values: Vec<f64> = moments.iter().map(|m| m.0[k]).collect();
        let (m, se) = mean_and_se(&values);
        let order = k + 1;
        report.row(format!("moment {order}"), None, m, se, Some(target), (m - target).abs() <= 3.0 * se);
        report.chain(format!("moment {order}"), 0.0, m, se, p.replicates, format!("T={}", p.horizon));
        report.check(format!("moment {order} within 3 se"), (m - target).abs(), 3.0 * se);
    }
    // Event times near T carry absolute rounding of order eps T, accumulated over the events.
    let drift = moments.iter().map(|m| m.1).fold(0.0, f64::max);
    let events = moments.iter().map(|m| m.2).max().unwrap_or(1) as f64;
    report.check("trajectory reconstruction", drift, 10.0 * f64::EPSILON * p.horizon * events.sqrt());

    // First event from a fixed state against its exact law.
    let (x, v) = ([p.ks_start[0]], [p.ks_start[1]]);
    let cdf = |t: f64| 1.0 - (-gaussian_canonical_cumulative_rate(x[0] * v[0], 1.0, t)).exp();
    let mut first_events = Vec::new();
    for (label, method) in [("inversion", EventMethod::Auto), ("thinning", EventMethod::Thinning)] {
        let options = SimulationOptions { method, ..SimulationOptions::default() };
        let mut gen = rng::stream(config.seed, 1_000 + method as u64);
        let samples = (0..p.ks_samples)
            .map(|_| {
                flip_time(&pot, IntensityKind::Canonical, &x, &v, 0, f64::INFINITY, &options, &mut gen)?
                    .ok_or_else(|| Error::Numeric("no event under an unbounded rate".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let ks = ks_statistic(&samples, cdf);
        let threshold = ks_threshold(p.ks_samples);
        report.row(format!("first event KS {label}"), None, ks, 0.0, Some(threshold), ks < threshold);
        report.check(format!("first event KS {label}"), ks, threshold);
        first_events.push(samples);
    }
    let ks = two_sample_ks_statistic(&first_events[0], &first_events[1]);
    let threshold = two_sample_ks_threshold(p.ks_samples, p.ks_samples);
    report.row("first event KS thinning vs inversion", None, ks, 0.0, Some(threshold), ks < threshold);
    report.check("first event KS thinning vs inversion", ks, threshold);

    // Position at a fixed time: a whole trajectory per sample.
    let mut ends = Vec::new();
    for method in [EventMethod::Auto, EventMethod::Thinning] {
        let options = SimulationOptions { method, ..SimulationOptions::default() };
        let mut gen = rng::stream(config.seed, 2_000 + method as u64);
        let samples = (0..p.trajectory_samples)
            .map(|_| Ok(simulate_zigzag(&pot, &spec, &x, &v, p.trajectory_horizon, &options, &mut gen)?.final_state().0[0]))
            .collect::<Result<Vec<_>>>()?;
        ends.push(samples);
    }
    let ks = two_sample_ks_statistic(&ends[0], &ends[1]);
    let threshold = two_sample_ks_threshold(p.trajectory_samples, p.trajectory_samples);
    report.row("end position KS thinning vs inversion", None, ks, 0.0, Some(threshold), ks < threshold);
    report.check("end position KS thinning vs inversion", ks, threshold);
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GammaParams {
    gamma: f64,
    horizon: f64,
    replicates: usize,
    lambdas: Vec<f64>,
    basis: usize,
    quadrature_order: usize,
}

impl Default for GammaParams {
    fn default() -> Self {
        Self { gamma: 0.5, horizon: 1e5, replicates: 16, lambdas: vec![0.0], basis: 20, quadrature_order: 40 }
    }
}

pub fn zigzag_1d_gamma(config: &ExperimentConfig) -> Result<Report> {
    let p: GammaParams = config.params()?;
    check_continuous_lambdas(&p.lambdas)?;
    check_horizon(p.horizon, p.replicates)?;
    require(p.gamma.is_finite() && p.gamma > 0.0, || format!("gamma {} must be positive", p.gamma))?;
    require(p.basis > 0 && p.quadrature_order >= 2, || "basis and quadrature_order must be positive".into())?;
    let pot = GaussianPotential::standard(1)?;
    let grid = Grid::GaussHermite { order: p.quadrature_order };
    let canonical = IntensitySpec::canonical();
    let plus = IntensitySpec::uniform(IntensityKind::CanonicalPlusGamma { gamma: p.gamma }, 0.0, RefreshMode::Full)?;
    let mut report = Report::new(&config.experiment, config.seed);

    report.check("stationarity", stationarity(&pot, &[&canonical, &plus], 12, &grid)?, STATIONARITY_TOL);
    let (lowest, mismatch) = gap_over_basis(&mut report, &pot, &canonical, &plus, p.basis, &grid)?;
    report.check("dirichlet gap >= 0", -lowest, GAP_TOL);
    report.check("dirichlet gap: direct = decomposed", mismatch, 1e-10);
    let f = x_coordinate(1, 0);
    empirical_ordering(
        &mut report,
        &pot,
        ("canonical", &canonical),
        (&format!("canonical+gamma({})", p.gamma), &plus),
        &f,
        p.horizon,
        p.replicates,
        &p.lambdas,
        config.seed,
    )?;
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RefreshParams {
    refresh_rate: f64,
    variances: Vec<f64>,
    kind: IntensityKind,
    horizon: f64,
    replicates: usize,
    lambdas: Vec<f64>,
    basis: usize,
    quadrature_order: usize,
}

impl Default for RefreshParams {
    fn default() -> Self {
        Self {
            refresh_rate: 1.0,
            variances: vec![1.0, 1.0],
            kind: IntensityKind::Canonical,
            horizon: 2e4,
            replicates: 16,
            lambdas: vec![0.0],
            basis: 20,
            quadrature_order: 40,
        }
    }
}

pub fn zigzag_2d_refresh(config: &ExperimentConfig) -> Result<Report> {
    let p: RefreshParams = config.params()?;
    check_continuous_lambdas(&p.lambdas)?;
    check_horizon(p.horizon, p.replicates)?;
    require(p.refresh_rate.is_finite() && p.refresh_rate > 0.0, || format!("refresh_rate {}", p.refresh_rate))?;
    require(p.variances.len() == 2, || "the refreshment comparison is two-dimensional".into())?;
    require(p.basis > 0 && p.quadrature_order >= 2, || "basis and quadrature_order must be positive".into())?;
    p.kind.validate().map_err(|e| Error::Config(e.to_string()))?;
    let pot = GaussianPotential::new(p.variances.clone()).map_err(|e| Error::Config(e.to_string()))?;
    let grid = Grid::GaussHermite { order: p.quadrature_order };
    let partial = IntensitySpec::uniform(p.kind, p.refresh_rate, RefreshMode::PerCoordinateFlip)?;
    let full = IntensitySpec::uniform(p.kind, p.refresh_rate, RefreshMode::Full)?;
    let mut report = Report::new(&config.experiment, config.seed);

    report.check("stationarity", stationarity(&pot, &[&partial, &full], 12, &grid)?, STATIONARITY_TOL);
    let (lowest, mismatch) = gap_over_basis(&mut report, &pot, &partial, &full, p.basis, &grid)?;
    report.check("dirichlet gap >= 0", -lowest, GAP_TOL);
    report.check("dirichlet gap: direct = decomposed", mismatch, 1e-10);
    let f = x_coordinate(2, 0);
    empirical_ordering(
        &mut report,
        &pot,
        ("partial refresh", &partial),
        ("full refresh", &full),
        &f,
        p.horizon,
        p.replicates,
        &p.lambdas,
        config.seed,
    )?;
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PhiParams {
    eps: Vec<f64>,
    grid_points: usize,
    r_min: f64,
    r_max: f64,
    mc_samples: usize,
    mc_eps: Vec<f64>,
    mc_r: Vec<f64>,
}

impl Default for PhiParams {
    fn default() -> Self {
        let mc_r = (0..10).map(|k| 0.1 * 40f64.powf(k as f64 / 9.0)).collect();
        Self {
            eps: vec![0.01, 0.1, 1.0],
            grid_points: 241,
            r_min: 1e-3,
            r_max: 1e3,
            mc_samples: 10_000_000,
            mc_eps: vec![0.1, 1.0],
            mc_r,
        }
    }
}

/// Slack for comparisons of values in `[0, 1]` that may coincide exactly.
const ROUNDING: f64 = 4.0 * f64::EPSILON;

/// Samples per parallel chunk of the Monte Carlo integral.
const MC_CHUNKS: usize = 16;

pub fn phi_eps_bounds(config: &ExperimentConfig) -> Result<Report> {
    let p: PhiParams = config.params()?;
    let positive = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x > 0.0);
    require(!p.eps.is_empty() && positive(&p.eps) && positive(&p.mc_eps), || "eps values must be positive".into())?;
    require(positive(&p.mc_r) && p.r_min > 0.0 && p.r_max > p.r_min && p.grid_points >= 2, || "invalid r grid".into())?;
    require(p.mc_samples >= 2 * MC_CHUNKS, || format!("mc_samples {} too small", p.mc_samples))?;
    let mut report = Report::new(&config.experiment, config.seed);
    let grid: Vec<f64> = (0..p.grid_points)
        .map(|k| p.r_min * (p.r_max / p.r_min).powf(k as f64 / (p.grid_points - 1) as f64))
        .collect();
    let mut eps = p.eps.clone();
    eps.sort_by(f64::total_cmp);
    eps.insert(0, 0.0);
    let phis = eps.iter().map(|&e| PhiEps::new(e)).collect::<std::result::Result<Vec<_>, _>>()?;

    let (mut symmetry, mut monotone, mut bound) = (0.0_f64, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &r in &grid {
        for (k, phi) in phis.iter().enumerate() {
            symmetry = symmetry.max((r * phi.eval(1.0 / r) - phi.eval(r)).abs());
            if k > 0 {
                monotone = monotone.max(phi.eval(r) - phis[k - 1].eval(r));
                let phi0 = phis[0].eval(r);
                let gap = phi0 - phi.eval(r);
                bound = bound.max(-gap).max(gap - phi0 * phi.relative_gap_bound());
            }
        }
    }
    report.check("symmetry r phi(1/r) = phi(r)", symmetry, 1e-10);
    report.check("phi nonincreasing in eps", monotone, ROUNDING);
    report.check("0 <= phi_0 - phi_eps <= phi_0 sqrt(e^eps - 1)", bound, ROUNDING);
    for phi in &phis[1..] {
        for r in [0.1, 0.5, 1.0, 2.0, 10.0] {
            report.exact(format!("phi eps={} r={r}", phi.eps()), None, phi.eval(r), true);
        }
    }

    // Intensities: uniform distance to the canonical rate.
    let s_grid: Vec<f64> = (0..=2000).map(|k| -50.0 + 0.05 * k as f64).collect();
    for phi in &phis[1..] {
        if let Some(limit) = phi.intensity_gap_bound() {
            let worst = s_grid.iter().map(|&s| (phi.intensity(s) - s.max(0.0)).abs()).fold(0.0, f64::max);
            report.row(format!("sup |rate_eps - rate_0| eps={}", phi.eps()), None, worst, 0.0, Some(limit), worst <= limit);
            report.check(format!("intensity gap eps={}", phi.eps()), worst, limit);
        }
    }

    // Closed form against E min(1, r exp(-eps/2 + sqrt(eps) Z)).
    let points: Vec<(f64, f64, f64)> = p
        .mc_eps
        .iter()
        .flat_map(|&e| p.mc_r.iter().map(move |&r| (e, r)))
        .map(|(e, r)| Ok((e, r, PhiEps::new(e)?.eval(r))))
        .collect::<Result<Vec<_>>>()?;
    let per_chunk = p.mc_samples / MC_CHUNKS;
    // Sums of (sample - closed form) and its square, per point.
    let sums = rng::run_replicates(config.seed, MC_CHUNKS, |_, mut gen| {
        let mut acc = vec![(0.0, 0.0); points.len()];
        for _ in 0..per_chunk {
            let z: f64 = StandardNormal.sample(&mut gen);
            for ((e, r, closed), slot) in points.iter().zip(acc.iter_mut()) {
                let d = (r * (-e / 2.0 + e.sqrt() * z).exp()).min(1.0) - closed;
                slot.0 += d;
                slot.1 += d * d;
            }
        }
        acc
    });
    let n = (per_chunk * MC_CHUNKS) as f64;
    let mut worst = f64::NEG_INFINITY;
    for (k, (e, r, closed)) in points.iter().enumerate() {
        let (s1, s2) = sums.iter().fold((0.0, 0.0), |acc, chunk| (acc.0 + chunk[k].0, acc.1 + chunk[k].1));
        let mean = s1 / n;
        let se = ((s2 / n - mean * mean).max(0.0) / (n - 1.0)).sqrt();
        let z = if se > 0.0 { mean.abs() / se } else if mean == 0.0 { 0.0 } else { f64::INFINITY };
        worst = worst.max(z);
        report.row(format!("phi monte carlo eps={e} r={r:.4}"), None, closed + mean, se, Some(*closed), z < 4.0);
    }
    report.check("closed form within 4 se of monte carlo", worst, 4.0);
    report.meta("monte carlo samples", per_chunk * MC_CHUNKS);
    Ok(report)
}
