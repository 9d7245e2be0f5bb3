use nalgebra::DMatrix;
use nonrev_core::finite::*;
use nonrev_core::rng;
use nonrev_core::zoo::*;
use proptest::prelude::*;
use rand::Rng;

fn random_observable(n: usize, seed: u64) -> Observable {
    let mut gen = rng::stream(seed, 99);
    Observable::from_fn(n, |_| gen.random::<f64>() * 4.0 - 2.0).unwrap()
}

fn pair(n: usize, seed: u64, side: Side) -> DominatedPair {
    random_dominated_pair(n, side, &mut rng::stream(seed, 0)).unwrap()
}

/// `||f_bar||^2 + 2 sum_k lambda^k <f_bar, P^k f_bar>` truncated at 1e-13 relative weight.
fn series_oracle(f: &Observable, p: &KernelMatrix, mu: &FiniteDistribution, lambda: f64) -> f64 {
    let w = mu.weights();
    let mean: f64 = f.values().iter().zip(w).map(|(a, b)| a * b).sum();
    let fbar: Vec<f64> = f.values().iter().map(|a| a - mean).collect();
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(w).map(|((x, y), m)| x * y * m).sum() };
    let mut total = dot(&fbar, &fbar);
    let mut pk = fbar.clone();
    let mut weight = 1.0;
    let n = fbar.len();
    while weight > 1e-13 && lambda > 0.0 {
        pk = (0..n).map(|i| (0..n).map(|j| p.entry(i, j) * pk[j]).sum()).collect();
        weight *= lambda;
        total += 2.0 * weight * dot(&fbar, &pk);
    }
    total
}

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adjoint_is_an_involution(n in 2usize..9, seed in any::<u64>(), left in any::<bool>()) {
        let side = if left { Side::Left } else { Side::Right };
        let pr = pair(n, seed, side);
        for p in [&pr.p1, &pr.p2] {
            let twice = adjoint(&adjoint(p, &pr.mu).unwrap(), &pr.mu).unwrap();
            prop_assert!(max_diff(twice.matrix(), p.matrix()) <= 1e-12);
        }
    }

    #[test]
    fn reversible_parts_satisfy_detailed_balance(n in 2usize..9, seed in any::<u64>(), left in any::<bool>()) {
        let side = if left { Side::Left } else { Side::Right };
        let pr = pair(n, seed, side);
        for p in [&pr.p1, &pr.p2] {
            prop_assert!(check_muq_reversible(p, &pr.mu, &pr.q).unwrap());
            let (qp, pq) = reversible_parts(p, &pr.q).unwrap();
            prop_assert!(detailed_balance_residual(&qp, &pr.mu).unwrap() <= STRUCTURAL_TOL);
            prop_assert!(detailed_balance_residual(&pq, &pr.mu).unwrap() <= STRUCTURAL_TOL);
        }
    }

    #[test]
    fn var_lambda_matches_series(n in 2usize..9, seed in any::<u64>(), lambda in 0.0f64..0.99) {
        let pr = pair(n, seed, Side::Left);
        let f = random_observable(n, seed);
        for p in [&pr.p1, &pr.p2] {
            let exact = var_lambda(&f, p, &pr.mu, lambda).unwrap();
            prop_assert!((exact - series_oracle(&f, p, &pr.mu, lambda)).abs() <= SOLVE_TOL);
        }
    }

    #[test]
    fn dirichlet_formulas_agree(n in 2usize..9, seed in any::<u64>()) {
        let pr = pair(n, seed, Side::Left);
        let (qp, _) = reversible_parts(&pr.p1, &pr.q).unwrap();
        let f = random_observable(n, seed);
        let a = dirichlet_form(&f, &qp, &pr.mu).unwrap();
        let b = dirichlet_form_squared_jumps(&f, &qp, &pr.mu).unwrap();
        prop_assert!((a - b).abs() <= STRUCTURAL_TOL);
    }

    #[test]
    fn cycle_variance_is_symmetric(n in 2usize..9, seed in any::<u64>(), lambda in 0.0f64..0.99) {
        let pr = pair(n, seed, Side::Right);
        let f = random_observable(n, seed);
        let a = var_lambda_cycle(&f, &pr.p1, &pr.p2, &pr.mu, lambda).unwrap();
        let b = var_lambda_cycle(&f, &pr.p2, &pr.p1, &pr.mu, lambda).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn projections_decompose(n in 2usize..12, seed in any::<u64>()) {
        let pr = pair(n, seed, Side::Left);
        let f = random_observable(n, seed);
        let plus = project_symmetric(&f, &pr.q, Sign::Plus).unwrap();
        let minus = project_symmetric(&f, &pr.q, Sign::Minus).unwrap();
        prop_assert!(plus.add(&minus).unwrap().max_abs_diff(&f).unwrap() <= 1e-15);
        prop_assert_eq!(project_symmetric(&plus, &pr.q, Sign::Plus).unwrap(), plus);
        prop_assert_eq!(project_symmetric(&minus, &pr.q, Sign::Minus).unwrap(), minus);
    }

    #[test]
    fn every_zoo_constructor_is_structured(weights in prop::collection::vec(0.1f64..5.0, 5..9), theta in 0.0f64..1.0) {
        let n = weights.len();
        let target = RingTarget::new(weights).unwrap();
        let mu = lift_distribution(target.pi());
        let q = velocity_flip(n);
        let psi = FlowMap::ring_shift(n);
        let mut kernels = vec![gustafson_ring(&target).unwrap().kernel];
        let pair = guided_walk_ring(&target, &[0.6, 0.4]).unwrap();
        for rate in [SwitchingRate::Minimal, SwitchingRate::Maximal, SwitchingRate::Convex(theta)] {
            kernels.push(lifted_kernel(&pair, &rate).unwrap().kernel);
        }
        for rule in [AcceptanceRule::Metropolis, AcceptanceRule::Barker] {
            kernels.push(metropolized_flow_finite(&mu, &psi, &q, &rule).unwrap());
        }
        for k in 1..4 {
            kernels.push(extra_chance_finite(&mu, &psi, &q, k).unwrap());
        }
        kernels.push(velocity_refresh(n, theta).unwrap());
        for p in &kernels {
            prop_assert!(check_invariance(p, &mu).unwrap());
            prop_assert!(check_muq_reversible(p, &mu, &q).unwrap());
        }
        let collapsed = collapsed_kernel(&pair).unwrap();
        prop_assert!(detailed_balance_residual(&collapsed, target.pi()).unwrap() <= STRUCTURAL_TOL);
    }

    #[test]
    fn admissible_rates_dominate_minimal(weights in prop::collection::vec(0.1f64..5.0, 5..9), extra in prop::collection::vec(0.0f64..1.0, 9)) {
        let target = RingTarget::new(weights).unwrap();
        let n = target.len();
        let pair = guided_walk_ring(&target, &[1.0]).unwrap();
        let (min_plus, min_minus) = SwitchingRate::Minimal.rates(&pair).unwrap();
        // Add a common amount to both directions, capped by the admissible maximum.
        let bumped: Vec<f64> = (0..n)
            .map(|x| extra[x] * (1.0 - pair.total(1, x) - min_plus[x]).min(1.0 - pair.total(-1, x) - min_minus[x]))
            .collect();
        let custom = SwitchingRate::Custom {
            plus: (0..n).map(|x| min_plus[x] + bumped[x]).collect(),
            minus: (0..n).map(|x| min_minus[x] + bumped[x]).collect(),
        };
        let (plus, minus) = custom.rates(&pair).unwrap();
        for x in 0..n {
            prop_assert!(plus[x] >= min_plus[x] - 1e-15 && minus[x] >= min_minus[x] - 1e-15);
        }
        let k = lifted_kernel(&pair, &custom).unwrap();
        prop_assert!(check_muq_reversible(&k.kernel, &k.mu, &k.involution).unwrap());
    }

    #[test]
    fn symmetrization_matches_collapsed_powers(weights in prop::collection::vec(0.1f64..5.0, 5..8), theta in 0.0f64..1.0, seed in any::<u64>()) {
        let target = RingTarget::new(weights).unwrap();
        let n = target.len();
        let pair = guided_walk_ring(&target, &[0.5, 0.5]).unwrap();
        let lifted = lifted_kernel(&pair, &SwitchingRate::Convex(theta)).unwrap();
        let adj = adjoint(&lifted.kernel, &lifted.mu).unwrap();
        let sym = KernelMatrix::new((lifted.kernel.matrix() + adj.matrix()) * 0.5).unwrap();
        let collapsed = collapsed_kernel(&pair).unwrap();
        let mut pf = random_observable(n, seed);
        let mut sf = lift_observable(&pf);
        for _ in 0..30 {
            pf = collapsed.apply(&pf).unwrap();
            sf = sym.apply(&sf).unwrap();
            prop_assert!(sf.max_abs_diff(&lift_observable(&pf)).unwrap() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn certified_pairs_order_variances(n in 2usize..9, seed in any::<u64>(), left in any::<bool>()) {
        let side = if left { Side::Left } else { Side::Right };
        let pr = pair(n, seed, side);
        let lambdas: Vec<f64> = (1..20).map(|k| 0.05 * k as f64).collect();
        let report = verify_ordering_theorem(&pr.p1, &pr.p2, &pr.mu, &pr.q, &lambdas, 1000, seed).unwrap();
        prop_assert!(report.holds, "{:?}", report);
    }
}

#[test]
fn acceptance_rule_bounds_on_grid() {
    for rule in [AcceptanceRule::Metropolis, AcceptanceRule::Barker] {
        rule.validate().unwrap();
    }
}

#[test]
fn swapped_lifted_pair_fails_with_witness() {
    let target = RingTarget::new(vec![1.0, 2.0, 3.0, 2.0, 1.0]).unwrap();
    let pair = guided_walk_ring(&target, &[1.0]).unwrap();
    let minimal = lifted_kernel(&pair, &SwitchingRate::Minimal).unwrap();
    let maximal = lifted_kernel(&pair, &SwitchingRate::Maximal).unwrap();
    let (mu, q) = (&minimal.mu, &minimal.involution);
    let good = dirichlet_dominance_certificate(&minimal.kernel, &maximal.kernel, mu, q, Side::Right).unwrap();
    assert!(good.holds);
    let bad = dirichlet_dominance_certificate(&maximal.kernel, &minimal.kernel, mu, q, Side::Right).unwrap();
    assert!(!bad.holds);
    let g = bad.witness.unwrap();
    let qk = q.as_kernel();
    let e_max = dirichlet_form(&g, &maximal.kernel.compose(&qk).unwrap(), mu).unwrap();
    let e_min = dirichlet_form(&g, &minimal.kernel.compose(&qk).unwrap(), mu).unwrap();
    assert!(e_max < e_min);
    let lambdas = [0.1, 0.5, 0.9, 0.99];
    let report = verify_ordering_theorem(&minimal.kernel, &maximal.kernel, mu, q, &lambdas, 200, 3).unwrap();
    assert!(report.holds);
}

#[test]
fn quantitative_bound_on_random_pairs() {
    for seed in 0..10 {
        let pr = pair(6, seed, Side::Left);
        // Id - Q P2' = alpha (Id - Q P2) for P2' = (1 - alpha) Q + alpha P2.
        let alpha = 0.5;
        let lazy = pr.q.as_kernel().mixture(1.0 - alpha, &pr.p2).unwrap();
        let f = project_symmetric(&random_observable(6, seed), &pr.q, Sign::Plus).unwrap();
        for lambda in [0.2, 0.8, 0.95] {
            let bound = verify_quantitative_remark(&pr.p1, &lazy, &pr.mu, &pr.q, alpha, &f, lambda).unwrap();
            assert!(bound.holds, "{bound:?}");
        }
    }
}
