use nonrev_core::finite::{var_lambda, FiniteDistribution, KernelMatrix, Observable};
use nonrev_core::rng;
use nonrev_core::zoo::{
    lift_distribution, lift_observable, metropolized_flow_finite, velocity_flip, velocity_refresh, AcceptanceRule,
    FlowMap, RingTarget,
};
use nonrev_mc::chain::{sample_distribution, simulate_kernel};
use nonrev_mc::estimate::{estimate_var_lambda, var_lambda_grid, ChainStats};

fn simulate_observable(p: &KernelMatrix, mu: &FiniteDistribution, f: &Observable, steps: usize, seed: u64) -> Vec<Vec<f64>> {
    rng::run_replicates(seed, 16, |_, mut gen| {
        let start = sample_distribution(mu, &mut gen);
        simulate_kernel(p, start, steps, &mut gen)
            .unwrap()
            .into_iter()
            .map(|s| f.values()[s])
            .collect()
    })
}

#[test]
fn two_state_chain_matches_exact_value() {
    let p = KernelMatrix::from_rows(vec![vec![0.7, 0.3], vec![0.6, 0.4]]).unwrap();
    let mu = FiniteDistribution::new(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
    let f = Observable::new(vec![1.0, -2.0]).unwrap();
    let exact = var_lambda(&f, &p, &mu, 0.5).unwrap();
    let chains = simulate_observable(&p, &mu, &f, 1_000_000, 11);
    let stats = estimate_var_lambda(&chains, 0.5, None).unwrap();
    assert!(
        (stats.estimate - exact).abs() <= 3.0 * stats.se,
        "{} ± {} vs {exact}",
        stats.estimate,
        stats.se
    );
}

#[test]
fn ring_flow_ordering_matches_exact_ordering() {
    // Refresh-then-flow chain on a lifted ring: the discrete analogue of GHMC.
    let target = RingTarget::new(vec![1.0, 3.0, 2.0, 5.0, 1.0, 4.0]).unwrap();
    let n = target.len();
    let mu = lift_distribution(target.pi());
    let q = velocity_flip(n);
    let psi = FlowMap::ring_shift(n);
    let refresh = velocity_refresh(n, 0.3).unwrap();
    let f = lift_observable(&Observable::from_fn(n, |x| (x as f64 - 2.0).powi(2)).unwrap());
    let lambdas = [0.5, 0.9];

    let kernels: Vec<KernelMatrix> = [AcceptanceRule::Metropolis, AcceptanceRule::Barker]
        .iter()
        .map(|rule| refresh.compose(&metropolized_flow_finite(&mu, &psi, &q, rule).unwrap()).unwrap())
        .collect();
    let exact: Vec<Vec<f64>> = kernels
        .iter()
        .map(|p| lambdas.iter().map(|&l| var_lambda(&f, p, &mu, l).unwrap()).collect())
        .collect();

    let empirical: Vec<Vec<ChainStats>> = kernels
        .iter()
        .map(|p| {
            let chains = simulate_observable(p, &mu, &f, 200_000, 5);
            lambdas.iter().map(|&l| estimate_var_lambda(&chains, l, None).unwrap()).collect()
        })
        .collect();

    for (li, _) in lambdas.iter().enumerate() {
        assert!(exact[0][li] <= exact[1][li] + 1e-12);
        for k in 0..2 {
            let s = &empirical[k][li];
            assert!((s.estimate - exact[k][li]).abs() <= 3.5 * s.se, "{} ± {} vs {}", s.estimate, s.se, exact[k][li]);
        }
        let (m, b) = (&empirical[0][li], &empirical[1][li]);
        assert!(m.estimate <= b.estimate + 2.0 * (m.se * m.se + b.se * b.se).sqrt());
    }
}

#[test]
fn grid_agrees_with_single_lambda_estimates() {
    let p = KernelMatrix::from_rows(vec![vec![0.1, 0.9], vec![0.5, 0.5]]).unwrap();
    let chain: Vec<f64> = simulate_kernel(&p, 0, 50_000, &mut rng::stream(3, 0))
        .unwrap()
        .into_iter()
        .map(|s| s as f64)
        .collect();
    let lambdas = [0.0, 0.3, 0.8];
    let (grid, _) = var_lambda_grid(&chain, &lambdas).unwrap();
    for (&l, g) in lambdas.iter().zip(grid) {
        let single = nonrev_mc::estimate::var_lambda_single(&chain, l, None).unwrap();
        assert!((single - g).abs() < 1e-12);
    }
}
