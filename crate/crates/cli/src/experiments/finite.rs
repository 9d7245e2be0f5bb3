//! Exact experiments on finite state spaces.

use nonrev_core::finite::{
    adjoint, detailed_balance_residual, project_symmetric, reversible_parts, var_lambda, var_lambda_cycle,
    verify_ordering_theorem, DeterministicInvolution, FiniteDistribution, KernelMatrix, Observable, Side, Sign,
    ORDERING_TOL, STRUCTURAL_TOL,
};
use nonrev_core::rng::{self, StreamRng};
use nonrev_core::zoo::{
    collapsed_kernel, extra_chance_finite, guided_walk_ring, gustafson_ring, lift_distribution, lift_observable,
    lifted_kernel, metropolized_flow_finite, mh_subkernels, neal_pair_kernels, pair_first_observable,
    pair_sum_observable, random_dominated_pair, random_walk_metropolis_ring, two_cycle_variance_experiment,
    velocity_flip, velocity_refresh, AcceptanceRule, FlowMap, RingTarget, SwitchingRate,
};
use rand::Rng;
use serde::Deserialize;

use crate::config::{check_discrete_lambdas, default_lambdas, require, ExperimentConfig};
use crate::error::Result;
use crate::output::Report;

pub(crate) fn random_weights(n: usize, gen: &mut StreamRng) -> Vec<f64> {
    (0..n).map(|_| 0.5 + 2.5 * gen.random::<f64>()).collect()
}

pub(crate) fn random_observable(n: usize, gen: &mut StreamRng) -> Observable {
    Observable::from_fn(n, |_| 2.0 * gen.random::<f64>() - 1.0).expect("finite values")
}

/// Position index `x` on a ring of `n` states, as an observable.
fn position(n: usize) -> Observable {
    Observable::from_fn(n, |x| x as f64).expect("finite values")
}

/// `(f - mu f) / sd_mu(f)`; constant observables are returned centered.
fn standardize(f: &Observable, mu: &FiniteDistribution) -> Result<Observable> {
    let centered = mu.center(f)?;
    let sd = mu.norm_sq(&centered)?.sqrt();
    Ok(if sd > 0.0 { centered.scale(1.0 / sd) } else { centered })
}

fn max_entry_diff(a: &KernelMatrix, b: &KernelMatrix) -> f64 {
    let n = a.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a.entry(i, j) - b.entry(i, j)).abs());
        }
    }
    worst
}

/// Largest of: `|mu^T P - mu^T|`, `|P* - Q P Q|` entrywise, and the
/// detailed-balance residuals of `Q P` and `P Q`.
pub fn structure_residual(p: &KernelMatrix, mu: &FiniteDistribution, q: &DeterministicInvolution) -> Result<f64> {
    let n = p.dim();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let pushed: f64 = (0..n).map(|i| mu.weight(i) * p.entry(i, j)).sum();
        worst = worst.max((pushed - mu.weight(j)).abs());
    }
    if worst > STRUCTURAL_TOL {
        return Ok(worst);
    }
    worst = worst.max(max_entry_diff(&adjoint(p, mu)?, &q.conjugate(p)?));
    let (qp, pq) = reversible_parts(p, q)?;
    worst = worst.max(detailed_balance_residual(&qp, mu)?);
    worst = worst.max(detailed_balance_residual(&pq, mu)?);
    Ok(worst)
}

/// Strictly positive `pi`-reversible kernel: `T(x, y) = c w(x, y) / pi(x)` off
/// the diagonal for a random symmetric positive `w`.
pub fn random_positive_reversible(n: usize, gen: &mut StreamRng) -> Result<(KernelMatrix, FiniteDistribution)> {
    let pi = FiniteDistribution::from_unnormalized(random_weights(n, gen))?;
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let value = 0.1 + gen.random::<f64>();
            w[i][j] = value;
            w[j][i] = value;
        }
    }
    let worst = (0..n).map(|i| w[i].iter().sum::<f64>() / pi.weight(i)).fold(0.0, f64::max);
    let c = 0.9 / worst;
    let rows = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| c * w[i][j] / pi.weight(i)).collect();
            row[i] = 1.0 - row.iter().sum::<f64>();
            row
        })
        .collect();
    Ok((KernelMatrix::from_rows(rows)?, pi))
}

fn ring_target(weights: Option<Vec<f64>>, n: Option<usize>, seed: u64) -> Result<RingTarget> {
    let weights = match (weights, n) {
        (Some(_), Some(_)) => {
            return Err(crate::error::Error::Config("give either weights or n, not both".into()));
        }
        (Some(w), None) => w,
        (None, Some(n)) => {
            require(n >= 3, || format!("ring size {n} < 3"))?;
            random_weights(n, &mut rng::stream(seed, u64::MAX))
        }
        (None, None) => vec![1.0, 2.0, 3.0, 2.0, 1.0],
    };
    require(weights.len() >= 3 && weights.iter().all(|w| w.is_finite() && *w > 0.0), || {
        format!("ring weights must be >= 3 positive numbers, got {weights:?}")
    })?;
    Ok(RingTarget::new(weights)?)
}

fn shift_kernel(n: usize, k: i64) -> Result<KernelMatrix> {
    let map: Vec<usize> = (0..n).map(|x| (x as i64 + k).rem_euclid(n as i64) as usize).collect();
    Ok(KernelMatrix::from_map(&map)?)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct StructureParams {
    sizes: Vec<usize>,
    refresh: f64,
    /// Restricts the run to these constructor names.
    constructors: Option<Vec<String>>,
}

impl Default for StructureParams {
    fn default() -> Self {
        Self { sizes: vec![3, 5, 8], refresh: 0.3, constructors: None }
    }
}

type Named = (String, KernelMatrix, FiniteDistribution, DeterministicInvolution);

fn zoo_catalogue(target: &RingTarget, refresh: f64, gen: &mut StreamRng) -> Result<Vec<Named>> {
    let n = target.len();
    let pi = target.pi().clone();
    let mu = lift_distribution(&pi);
    let flip = velocity_flip(n);
    let id = DeterministicInvolution::identity(n);
    let mut out: Vec<Named> = Vec::new();
    let g = gustafson_ring(target)?;
    out.push(("gustafson-ring".into(), g.kernel, g.mu, g.involution));
    let shifts = mh_subkernels(target, &shift_kernel(n, 1)?, &shift_kernel(n, -1)?)?;
    let guided = guided_walk_ring(target, &[1.0])?;
    for (label, pair) in [("mh-shift", &shifts), ("guided", &guided)] {
        for (rate_label, rate) in [
            ("minimal", SwitchingRate::Minimal),
            ("convex-0.25", SwitchingRate::Convex(0.25)),
            ("convex-0.5", SwitchingRate::Convex(0.5)),
            ("convex-0.75", SwitchingRate::Convex(0.75)),
            ("maximal", SwitchingRate::Maximal),
        ] {
            let k = lifted_kernel(pair, &rate)?;
            out.push((format!("lifted-{label}-{rate_label}"), k.kernel, k.mu, k.involution));
        }
        out.push((format!("collapsed-{label}"), collapsed_kernel(pair)?, pi.clone(), id.clone()));
    }
    out.push(("random-walk-metropolis".into(), random_walk_metropolis_ring(target, &[1.0])?, pi.clone(), id.clone()));
    let psi = FlowMap::ring_shift(n);
    for rule in [AcceptanceRule::Metropolis, AcceptanceRule::Barker] {
        let k = metropolized_flow_finite(&mu, &psi, &flip, &rule)?;
        out.push((format!("metropolized-flow-{}", rule.name()), k, mu.clone(), flip.clone()));
    }
    for k_max in 1..=3 {
        out.push((format!("extra-chance-{k_max}"), extra_chance_finite(&mu, &psi, &flip, k_max)?, mu.clone(), flip.clone()));
    }
    out.push(("velocity-refresh".into(), velocity_refresh(n, refresh)?, mu.clone(), flip.clone()));
    let (t2, pi2) = random_positive_reversible(n, gen)?;
    let neal = neal_pair_kernels(&t2, &pi2)?;
    out.push(("neal-non-backtracking".into(), neal.p1, neal.mu.clone(), neal.swap.clone()));
    out.push(("neal-original".into(), neal.p2, neal.mu, neal.swap));
    Ok(out)
}

pub fn zoo_structure(config: &ExperimentConfig) -> Result<Report> {
    let p: StructureParams = config.params()?;
    require(!p.sizes.is_empty() && p.sizes.iter().all(|&n| n >= 3), || format!("ring sizes {:?} must be >= 3", p.sizes))?;
    require((0.0..=1.0).contains(&p.refresh), || format!("refresh probability {}", p.refresh))?;
    let mut report = Report::new(&config.experiment, config.seed);
    for &n in &p.sizes {
        let mut gen = rng::stream(config.seed, n as u64);
        let mut worst: f64 = 0.0;
        for target in [RingTarget::uniform(n)?, RingTarget::new(random_weights(n, &mut gen))?] {
            let label = if target.pi().weights().iter().all(|&w| w == 1.0 / n as f64) { "uniform" } else { "random" };
            let catalogue = zoo_catalogue(&target, p.refresh, &mut gen)?;
            if let Some(wanted) = &p.constructors {
                if let Some(bad) = wanted.iter().find(|w| !catalogue.iter().any(|c| &c.0 == *w)) {
                    return Err(crate::error::Error::Config(format!("unknown constructor {bad:?}")));
                }
            }
            for (name, k, mu, q) in catalogue {
                if p.constructors.as_ref().is_some_and(|w| !w.contains(&name)) {
                    continue;
                }
                let residual = structure_residual(&k, &mu, &q)?;
                worst = worst.max(residual);
                report.exact(format!("{name} n={n} {label}"), None, residual, residual <= STRUCTURAL_TOL);
            }
        }
        report.check(format!("structure n={n}"), worst, STRUCTURAL_TOL);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PairsParams {
    pairs: usize,
    sizes: Vec<usize>,
    lambdas: Vec<f64>,
    trials: usize,
}

impl Default for PairsParams {
    fn default() -> Self {
        Self { pairs: 50, sizes: vec![3, 4, 5, 6, 7, 8], lambdas: default_lambdas(), trials: 200 }
    }
}

pub fn random_pairs(config: &ExperimentConfig) -> Result<Report> {
    let p: PairsParams = config.params()?;
    check_discrete_lambdas(&p.lambdas)?;
    require(p.pairs > 0 && p.trials > 0, || "pairs and trials must be positive".into())?;
    require(!p.sizes.is_empty() && p.sizes.iter().all(|&n| n >= 2), || format!("sizes {:?} must be >= 2", p.sizes))?;
    let mut report = Report::new(&config.experiment, config.seed);
    let (mut plus, mut minus): (f64, f64) = (0.0, 0.0);
    for k in 0..p.pairs {
        let side = if k % 2 == 0 { Side::Left } else { Side::Right };
        let n = p.sizes[k % p.sizes.len()];
        let pair = random_dominated_pair(n, side, &mut rng::stream(config.seed, k as u64))?;
        let out = verify_ordering_theorem(&pair.p1, &pair.p2, &pair.mu, &pair.q, &p.lambdas, p.trials, config.seed.wrapping_add(k as u64))?;
        plus = plus.max(out.max_violation_plus);
        minus = minus.max(out.max_violation_minus);
        let case = format!("pair {k} n={n} {side:?}");
        report.exact(format!("{case} symmetric violation"), None, out.max_violation_plus, out.max_violation_plus <= ORDERING_TOL);
        report.exact(format!("{case} antisymmetric violation"), None, out.max_violation_minus, out.max_violation_minus <= ORDERING_TOL);
        report.exact(format!("{case} symmetric margin"), None, out.max_margin_plus, true);
    }
    report.check("Qf = f: var(P1) <= var(P2)", plus, ORDERING_TOL);
    report.check("Qf = -f: var(P1) >= var(P2)", minus, ORDERING_TOL);
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GustafsonParams {
    weights: Option<Vec<f64>>,
    n: Option<usize>,
    lambdas: Vec<f64>,
    observables: usize,
}

impl Default for GustafsonParams {
    fn default() -> Self {
        Self { weights: None, n: None, lambdas: default_lambdas(), observables: 20 }
    }
}

pub fn gustafson(config: &ExperimentConfig) -> Result<Report> {
    let p: GustafsonParams = config.params()?;
    check_discrete_lambdas(&p.lambdas)?;
    let target = ring_target(p.weights, p.n, config.seed)?;
    let n = target.len();
    let mut report = Report::new(&config.experiment, config.seed);
    let k = gustafson_ring(&target)?;
    report.check("(mu,Q)-reversibility", structure_residual(&k.kernel, &k.mu, &k.involution)?, STRUCTURAL_TOL);
    let flow = metropolized_flow_finite(&k.mu, &FlowMap::ring_shift(n), &k.involution, &AcceptanceRule::Metropolis)?;
    report.check("equals metropolized ring shift", max_entry_diff(&flow, &k.kernel), 1e-14);
    let rotation = gustafson_ring(&RingTarget::uniform(n)?)?;
    let psi = FlowMap::ring_shift(n);
    let deterministic = (0..2 * n).all(|z| rotation.kernel.entry(z, psi.image(z)) == 1.0);
    report.flag("uniform target gives a rotation", deterministic);

    let rw = random_walk_metropolis_ring(&target, &[1.0])?;
    let pi = target.pi();
    let x = position(n);
    for &lambda in &p.lambdas {
        let lifted = var_lambda(&lift_observable(&x), &k.kernel, &k.mu, lambda)?;
        let collapsed = var_lambda(&x, &rw, pi, lambda)?;
        report.exact("gustafson f=x", Some(lambda), lifted, lifted <= collapsed + ORDERING_TOL);
        report.exact("random-walk f=x", Some(lambda), collapsed, true);
    }
    let mut gen = rng::stream(config.seed, 0);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..p.observables {
        let f = random_observable(n, &mut gen);
        for &lambda in &p.lambdas {
            let diff = var_lambda(&lift_observable(&f), &k.kernel, &k.mu, lambda)? - var_lambda(&f, &rw, pi, lambda)?;
            worst = worst.max(diff);
        }
    }
    report.check("lifted <= collapsed random walk", worst, ORDERING_TOL);
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LiftedParams {
    weights: Option<Vec<f64>>,
    n: Option<usize>,
    steps: Vec<f64>,
    thetas: Vec<f64>,
    lambdas: Vec<f64>,
    trials: usize,
}

impl Default for LiftedParams {
    fn default() -> Self {
        Self { weights: None, n: None, steps: vec![1.0], thetas: vec![0.25, 0.5, 0.75], lambdas: default_lambdas(), trials: 200 }
    }
}

pub fn lifted_ordering(config: &ExperimentConfig) -> Result<Report> {
    let mut p: LiftedParams = config.params()?;
    check_discrete_lambdas(&p.lambdas)?;
    require(p.trials > 0, || "trials must be positive".into())?;
    require(p.thetas.iter().all(|t| (0.0..=1.0).contains(t)), || format!("thetas {:?} outside [0, 1]", p.thetas))?;
    p.thetas.sort_by(f64::total_cmp);
    let target = ring_target(p.weights, p.n, config.seed)?;
    let n = target.len();
    require(!p.steps.is_empty() && 2 * p.steps.len() < n, || format!("{} step sizes need a ring larger than {n}", p.steps.len()))?;
    require((p.steps.iter().sum::<f64>() - 1.0).abs() <= 1e-12 && p.steps.iter().all(|s| *s >= 0.0), || {
        "steps must be a probability vector".into()
    })?;
    let mut report = Report::new(&config.experiment, config.seed);
    let pair = guided_walk_ring(&target, &p.steps)?;
    let mut chain: Vec<(String, SwitchingRate)> = vec![("minimal".into(), SwitchingRate::Minimal)];
    chain.extend(p.thetas.iter().map(|&t| (format!("convex({t})"), SwitchingRate::Convex(t))));
    chain.push(("maximal".into(), SwitchingRate::Maximal));
    let kernels = chain
        .iter()
        .map(|(name, rate)| Ok((name.clone(), lifted_kernel(&pair, rate)?)))
        .collect::<Result<Vec<_>>>()?;

    let x = position(n);
    let collapsed = collapsed_kernel(&pair)?;
    let rw = random_walk_metropolis_ring(&target, &p.steps)?;
    report.check("collapsed guided walk equals random-walk Metropolis", max_entry_diff(&collapsed, &rw), 1e-14);
    for (name, k) in &kernels {
        report.check(format!("{name}: (mu,Q)-reversibility"), structure_residual(&k.kernel, &k.mu, &k.involution)?, STRUCTURAL_TOL);
        for &lambda in &p.lambdas {
            let value = var_lambda(&lift_observable(&x), &k.kernel, &k.mu, lambda)?;
            report.exact(format!("{name} f=x"), Some(lambda), value, true);
        }
    }
    for &lambda in &p.lambdas {
        report.exact("random-walk f=x", Some(lambda), var_lambda(&x, &rw, target.pi(), lambda)?, true);
    }
    for w in kernels.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let out = verify_ordering_theorem(&a.1.kernel, &b.1.kernel, &a.1.mu, &a.1.involution, &p.lambdas, p.trials, config.seed)?;
        report.check(format!("{} <= {}", a.0, b.0), out.max_violation_plus, ORDERING_TOL);
        report.check(format!("{} >= {} for Qf = -f", a.0, b.0), out.max_violation_minus, ORDERING_TOL);
    }
    // Lifted chains against the collapsed reversible chain on the ring.
    let mut gen = rng::stream(config.seed, 1);
    let fs: Vec<Observable> = (0..p.trials.min(50)).map(|_| random_observable(n, &mut gen)).collect();
    for (name, k) in &kernels {
        let mut worst = f64::NEG_INFINITY;
        for f in &fs {
            for &lambda in &p.lambdas {
                let lifted = var_lambda(&lift_observable(f), &k.kernel, &k.mu, lambda)?;
                worst = worst.max(lifted - var_lambda(f, &rw, target.pi(), lambda)?);
            }
        }
        report.check(format!("{name} <= random-walk"), worst, ORDERING_TOL);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct NealParams {
    sizes: Vec<usize>,
    lambdas: Vec<f64>,
    observables: usize,
    trials: usize,
}

impl NealParams {
    fn with_lambdas(lambdas: Vec<f64>) -> Self {
        Self { sizes: vec![3, 5], lambdas, observables: 20, trials: 200 }
    }
}

impl Default for NealParams {
    fn default() -> Self {
        Self::with_lambdas(default_lambdas())
    }
}

fn neal_params(config: &ExperimentConfig, positive: bool) -> Result<NealParams> {
    let mut p: NealParams = config.params()?;
    if positive && config.params.get("lambdas").is_none() {
        p.lambdas = (1..=9).map(|k| k as f64 / 10.0).collect();
    }
    check_discrete_lambdas(&p.lambdas)?;
    if positive {
        require(p.lambdas.iter().all(|&l| l > 0.0), || "the identity needs lambda > 0".into())?;
    }
    require(!p.sizes.is_empty() && p.sizes.iter().all(|&n| n >= 2), || format!("sizes {:?} must be >= 2", p.sizes))?;
    require(p.observables > 0 && p.trials > 0, || "observables and trials must be positive".into())?;
    Ok(p)
}

/// `var_lambda(f, T_i)` of the position process of the pair chain `P_i`.
fn position_variance(f: &Observable, p: &KernelMatrix, mu: &FiniteDistribution, lambda: f64) -> Result<f64> {
    Ok(var_lambda(&pair_first_observable(f), p, mu, lambda)?)
}

pub fn neal_ordering(config: &ExperimentConfig) -> Result<Report> {
    let p = neal_params(config, false)?;
    let mut report = Report::new(&config.experiment, config.seed);
    for &n in &p.sizes {
        let mut gen = rng::stream(config.seed, n as u64);
        let (t2, pi) = random_positive_reversible(n, &mut gen)?;
        let pair = neal_pair_kernels(&t2, &pi)?;
        let out = verify_ordering_theorem(&pair.p1, &pair.p2, &pair.mu, &pair.swap, &p.lambdas, p.trials, config.seed)?;
        report.check(format!("n={n}: pair chains ordered for swap-symmetric g"), out.max_violation_plus, ORDERING_TOL);
        let mut worst = f64::NEG_INFINITY;
        for k in 0..p.observables {
            let f = random_observable(n, &mut gen);
            for &lambda in &p.lambdas {
                let a = position_variance(&f, &pair.p1, &pair.mu, lambda)?;
                let b = position_variance(&f, &pair.p2, &pair.mu, lambda)?;
                worst = worst.max(a - b);
                if k == 0 {
                    report.exact(format!("n={n} non-backtracking"), Some(lambda), a, a <= b + ORDERING_TOL);
                    report.exact(format!("n={n} original"), Some(lambda), b, true);
                }
            }
        }
        report.check(format!("n={n}: var(f, T1) <= var(f, T2)"), worst, ORDERING_TOL);
    }
    Ok(report)
}

pub fn neal_identity(config: &ExperimentConfig) -> Result<Report> {
    let p = neal_params(config, true)?;
    let mut report = Report::new(&config.experiment, config.seed);
    for &n in &p.sizes {
        let mut gen = rng::stream(config.seed, n as u64);
        let (t2, pi) = random_positive_reversible(n, &mut gen)?;
        let pair = neal_pair_kernels(&t2, &pi)?;
        let (mut residual, mut order): (f64, f64) = (0.0, f64::NEG_INFINITY);
        for k in 0..p.observables {
            let f = random_observable(n, &mut gen);
            let g = pair_sum_observable(&f);
            let var_pi = pi.variance(&f)?;
            for &lambda in &p.lambdas {
                let mut per_kernel = [0.0; 2];
                for (i, kernel) in [&pair.p1, &pair.p2].into_iter().enumerate() {
                    let lhs = var_lambda(&g, kernel, &pair.mu, lambda)?;
                    let vt = position_variance(&f, kernel, &pair.mu, lambda)?;
                    let rhs = -(1.0 - lambda * lambda) / lambda * var_pi + (1.0 + lambda).powi(2) / lambda * vt;
                    residual = residual.max((lhs - rhs).abs());
                    per_kernel[i] = vt;
                    if k == 0 {
                        report.row(format!("n={n} P{} var(g)", i + 1), Some(lambda), lhs, 0.0, Some(rhs), (lhs - rhs).abs() <= ORDERING_TOL);
                    }
                }
                order = order.max(per_kernel[0] - per_kernel[1]);
            }
        }
        report.check(format!("n={n}: identity residual"), residual, ORDERING_TOL);
        report.check(format!("n={n}: var(f, T1) <= var(f, T2)"), order, ORDERING_TOL);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CycleParams {
    weights: Option<Vec<f64>>,
    n: Option<usize>,
    refresh: f64,
    k_max: usize,
    lambdas: Vec<f64>,
    instances: usize,
    sizes: Vec<usize>,
}

impl Default for CycleParams {
    fn default() -> Self {
        Self { weights: None, n: None, refresh: 0.3, k_max: 3, lambdas: default_lambdas(), instances: 20, sizes: vec![3, 4, 5, 6, 7, 8] }
    }
}

pub fn two_cycle_extra_chance(config: &ExperimentConfig) -> Result<Report> {
    let p: CycleParams = config.params()?;
    check_discrete_lambdas(&p.lambdas)?;
    require(p.k_max >= 2, || format!("k_max = {} leaves nothing to compare", p.k_max))?;
    require((0.0..=1.0).contains(&p.refresh), || format!("refresh probability {}", p.refresh))?;
    require(!p.sizes.is_empty() && p.sizes.iter().all(|&n| n >= 2), || format!("sizes {:?} must be >= 2", p.sizes))?;
    let mut report = Report::new(&config.experiment, config.seed);

    // Closed-form identities on random (mu, Q)-reversible instances.
    let (mut fixed, mut swapped): (f64, f64) = (0.0, 0.0);
    for k in 0..p.instances {
        let side = if k % 2 == 0 { Side::Left } else { Side::Right };
        let n = p.sizes[k % p.sizes.len()];
        let mut gen = rng::stream(config.seed, k as u64);
        let pair = random_dominated_pair(n, side, &mut gen)?;
        let (mu, q) = (&pair.mu, &pair.q);
        let f = project_symmetric(&random_observable(n, &mut gen), q, Sign::Plus)?;
        let f = standardize(&f, mu)?;
        let norm = mu.norm_sq(&f)?;
        // A kernel fixing Q-symmetric observables: mixture of Q and the identity.
        let beta: f64 = gen.random();
        let p1 = q.as_kernel().mixture(beta, &KernelMatrix::identity(n))?;
        let product = p1.compose(&pair.p1)?;
        let p1q = pair.p1.compose(&q.as_kernel())?;
        let qp2 = q.left_compose(&pair.p2)?;
        for &lambda in p.lambdas.iter().filter(|&&l| l > 0.0) {
            let lhs = var_lambda_cycle(&f, &p1, &pair.p1, mu, lambda)?;
            let rhs = (2.0 + lambda + 1.0 / lambda) / 2.0 * var_lambda(&f, &product, mu, lambda * lambda)?
                + (lambda - 1.0 / lambda) / 2.0 * norm;
            fixed = fixed.max((lhs - rhs).abs());
            let a = var_lambda_cycle(&f, &pair.p1, &pair.p2, mu, lambda)?;
            let b = var_lambda_cycle(&f, &p1q, &qp2, mu, lambda)?;
            swapped = swapped.max((a - b).abs());
            if k == 0 {
                report.row("fixed-point identity", Some(lambda), lhs, 0.0, Some(rhs), (lhs - rhs).abs() <= ORDERING_TOL);
                report.row("{P1, P2} = {P1 Q, Q P2}", Some(lambda), a, 0.0, Some(b), (a - b).abs() <= ORDERING_TOL);
            }
        }
    }
    report.check("cycle identity with P1 f = f", fixed, ORDERING_TOL);
    report.check("cycle identity {P1, P2} = {P1 Q, Q P2}", swapped, ORDERING_TOL);

    // Extra chances on the ring, alternated with a velocity refreshment.
    let target = ring_target(p.weights, p.n, config.seed)?;
    let n = target.len();
    let mu = lift_distribution(target.pi());
    let q = velocity_flip(n);
    let psi = FlowMap::ring_shift(n);
    let refresh = velocity_refresh(n, p.refresh)?;
    let kernels = (1..=p.k_max).map(|k| extra_chance_finite(&mu, &psi, &q, k)).collect::<std::result::Result<Vec<_>, _>>()?;
    let x = lift_observable(&position(n));
    for (k, kernel) in kernels.iter().enumerate() {
        for &lambda in &p.lambdas {
            let value = var_lambda_cycle(&x, &refresh, kernel, &mu, lambda)?;
            report.exact(format!("extra-chance K={} f=x", k + 1), Some(lambda), value, true);
        }
    }
    let mut gen = rng::stream(config.seed, u64::MAX - 1);
    let fs: Vec<Observable> = (0..p.instances).map(|_| lift_observable(&random_observable(n, &mut gen))).collect();
    for k in 1..p.k_max {
        let mut worst: f64 = 0.0;
        for f in std::iter::once(&x).chain(&fs) {
            let out = two_cycle_variance_experiment(&refresh, &kernels[k], &refresh, &kernels[k - 1], &mu, &q, f, &p.lambdas)?;
            worst = worst.max(out.max_violation);
        }
        report.check(format!("extra-chance K={} <= K={k}", k + 1), worst, ORDERING_TOL);
    }
    Ok(report)
}
