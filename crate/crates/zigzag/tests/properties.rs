use nonrev_core::potential::{DoubleWellPotential, GaussianPotential, Potential};
use nonrev_core::rng;
use nonrev_zigzag::function::{PhaseFunction, Polynomial};
use nonrev_zigzag::intensity::{intensity, IntensityKind, IntensitySpec, RefreshMode};
use nonrev_zigzag::phi::PhiEps;
use nonrev_zigzag::simulate::{simulate_zigzag, SimulationOptions};
use proptest::prelude::*;

fn kinds() -> impl Strategy<Value = IntensityKind> {
    prop_oneof![
        Just(IntensityKind::Canonical),
        Just(IntensityKind::Barker),
        (0.001f64..2.0).prop_map(|eps| IntensityKind::Penalty { eps }),
        (0.0f64..3.0).prop_map(|gamma| IntensityKind::CanonicalPlusGamma { gamma }),
    ]
}

fn log_grid() -> Vec<f64> {
    (0..=120).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 120.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    // lambda(x, v) - lambda(x, -v) = ∂U(x) v and lambda(x, v) >= (∂U(x) v)_+.
    #[test]
    fn switching_identity_and_minimality(kind in kinds(), x in prop::collection::vec(-4.0f64..4.0, 2), flips in 0usize..4) {
        let pots: Vec<Box<dyn Potential>> = vec![
            Box::new(GaussianPotential::new(vec![0.5, 2.0]).unwrap()),
            Box::new(DoubleWellPotential::new(0.7, 1.0, 2).unwrap()),
        ];
        let spec = IntensitySpec::uniform(kind, 0.0, RefreshMode::Full).unwrap();
        let v = [if flips & 1 == 0 { 1.0 } else { -1.0 }, if flips & 2 == 0 { 1.0 } else { -1.0 }];
        let w = [-v[0], -v[1]];
        for pot in &pots {
            for i in 0..2 {
                let s = pot.partial(&x, i) * v[i];
                let (a, b) = (intensity(&spec, pot.as_ref(), i, &x, &v), intensity(&spec, pot.as_ref(), i, &x, &w));
                prop_assert!(a >= 0.0 && b >= 0.0);
                prop_assert!((a - b - s).abs() <= 1e-8 * (1.0 + s.abs()), "{kind:?}: {a} - {b} vs {s}");
                prop_assert!(a >= s.max(0.0) - 1e-12);
            }
        }
    }

    #[test]
    fn phi_symmetry_and_range(eps in 1e-4f64..3.0) {
        let phi = PhiEps::new(eps).unwrap();
        for r in log_grid() {
            let value = phi.eval(r);
            // Strictly inside (0, 1) in exact arithmetic; 1 - phi can round away for tiny eps.
            prop_assert!(value > 0.0 && value <= 1.0 && value <= r * (1.0 + 1e-12));
            prop_assert!((r * phi.eval(1.0 / r) - value).abs() <= 1e-10);
        }
    }

    #[test]
    fn phi_nonincreasing_in_eps(e1 in 0.0f64..2.0, e2 in 0.0f64..2.0) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let (a, b) = (PhiEps::new(lo).unwrap(), PhiEps::new(hi).unwrap());
        for r in log_grid() {
            prop_assert!(b.eval(r) <= a.eval(r) + 1e-15);
        }
    }

    #[test]
    fn phi_relative_gap_bound(eps in 1e-4f64..3.0) {
        let phi = PhiEps::new(eps).unwrap();
        let bound = phi.relative_gap_bound();
        for r in log_grid() {
            let phi0 = r.min(1.0);
            let gap = phi0 - phi.eval(r);
            prop_assert!(gap >= -1e-15);
            prop_assert!(gap <= phi0 * bound + 1e-15);
        }
    }

    // sup |lambda^eps - lambda^0| <= -log(1 - sqrt(e^eps - 1)) where defined.
    #[test]
    fn uniform_intensity_approximation(eps in 1e-4f64..0.69, s in -50.0f64..50.0) {
        let bound = PhiEps::new(eps).unwrap().intensity_gap_bound().unwrap();
        let gap = IntensityKind::Penalty { eps }.rate(s) - IntensityKind::Canonical.rate(s);
        prop_assert!(gap >= -1e-12 && gap <= bound + 1e-12);
    }

    #[test]
    fn trajectories_reconstruct_and_partition(seed in any::<u64>(), kind in kinds(), refresh in 0.0f64..2.0) {
        let pot = GaussianPotential::new(vec![1.0, 0.5]).unwrap();
        let spec = IntensitySpec::uniform(kind, refresh, RefreshMode::PerCoordinateFlip).unwrap();
        let traj = simulate_zigzag(&pot, &spec, &[0.5, -0.5], &[1.0, -1.0], 40.0, &SimulationOptions::default(), &mut rng::stream(seed, 0)).unwrap();
        traj.validate().unwrap();
        prop_assert!(traj.reconstruction_error() < 1e-12);
        let f = PhaseFunction::from(Polynomial::coordinate_power(2, 0, 2));
        let total = traj.integral(&f);
        let windows: f64 = traj.window_integrals(&f, 0.0, 40.0 / 37.0, 37).iter().sum();
        prop_assert!((total - windows).abs() <= 1e-9 * (1.0 + total.abs()));
        let ones = traj.integral(&PhaseFunction::from(Polynomial::constant(2, 1.0)));
        prop_assert!((ones - 40.0).abs() < 1e-9);
    }
}
