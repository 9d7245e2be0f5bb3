use std::sync::Arc;

use nonrev_core::potential::{DoubleWellPotential, GaussianPotential, Potential};
use nonrev_core::zoo::AcceptanceRule;
use nonrev_core::rng;
use nonrev_mc::estimate::{autocovariances, var_lambda_from_autocovariances};
use nonrev_mc::hamiltonian::{ghmc_step, leapfrog, PhaseState, SeparableHamiltonian};
use proptest::prelude::*;

fn hamiltonians() -> Vec<SeparableHamiltonian> {
    let pots: Vec<Arc<dyn Potential>> = vec![
        Arc::new(GaussianPotential::new(vec![1.0, 4.0]).unwrap()),
        Arc::new(DoubleWellPotential::new(0.5, 1.0, 2).unwrap()),
    ];
    pots.into_iter().map(|p| SeparableHamiltonian::new(p, 1.5).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    // psi^{-1} = xi o psi o xi.
    #[test]
    fn leapfrog_is_time_reversible(
        x in prop::collection::vec(-2.0f64..2.0, 2),
        v in prop::collection::vec(-2.0f64..2.0, 2),
        step in 0.01f64..0.3,
        nleap in 1usize..20,
    ) {
        for h in hamiltonians() {
            let z = PhaseState::new(x.clone(), v.clone()).unwrap();
            let back = leapfrog(&leapfrog(&z, &h, step, nleap).flipped(), &h, step, nleap).flipped();
            for (a, b) in back.x.iter().zip(&z.x).chain(back.v.iter().zip(&z.v)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ghmc_step_stays_finite(seed in any::<u64>(), omega in 0.05f64..1.5707963) {
        let h = &hamiltonians()[1];
        let mut gen = rng::stream(seed, 0);
        let mut z = PhaseState::new(vec![0.3, -0.2], vec![1.0, 0.5]).unwrap();
        for _ in 0..50 {
            z = ghmc_step(&z, h, 0.2, 5, omega, &AcceptanceRule::Barker, &mut gen).unwrap().state;
            prop_assert!(z.is_finite());
        }
    }

    // The plug-in estimate is a fixed linear functional of the autocovariances.
    #[test]
    fn plug_in_matches_direct_weighted_sum(
        chain in prop::collection::vec(-5.0f64..5.0, 60..300),
        lambda in 0.0f64..0.95,
        lag in 1usize..6,
    ) {
        let n = chain.len();
        let mean = chain.iter().sum::<f64>() / n as f64;
        let direct: f64 = (0..=lag)
            .map(|k| {
                let g = (0..n - k).map(|t| (chain[t] - mean) * (chain[t + k] - mean)).sum::<f64>() / n as f64;
                if k == 0 { g } else { 2.0 * lambda.powi(k as i32) * g }
            })
            .sum();
        let acov = autocovariances(&chain, lag);
        prop_assert!((var_lambda_from_autocovariances(&acov, lambda, lag) - direct).abs() < 1e-9);
    }
}
