//! Leapfrog flows and generalized Hamiltonian Monte Carlo.
//!
//! The phase space is `E = R^d x R^d` with `mu(x, v) ∝ exp(-U(x)) N(v; 0, sigma^2 I)`
//! and the momentum flip `xi(x, v) = (x, -v)`. One GHMC step is a partial
//! refreshment `v <- v cos(omega) + v' sin(omega)` followed by a metropolized
//! leapfrog flow that falls back to `xi` on rejection.

use std::sync::Arc;

use nonrev_core::potential::{gradient_check, Potential};
use nonrev_core::zoo::AcceptanceRule;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhaseState {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.len() != v.len() {
            return Err(Error::InvalidParameter(format!(
                "position has {} components, velocity {}",
                x.len(),
                v.len()
            )));
        }
        let state = Self { x, v };
        if !state.is_finite() {
            return Err(Error::NonFiniteState);
        }
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.v).all(|c| c.is_finite())
    }

    /// `xi(x, v) = (x, -v)`.
    pub fn flipped(&self) -> Self {
        Self {
            x: self.x.clone(),
            v: self.v.iter().map(|c| -c).collect(),
        }
    }
}

/// `H(x, v) = U(x) + |v|^2 / (2 sigma^2)`.
#[derive(Debug, Clone)]
pub struct SeparableHamiltonian {
    potential: Arc<dyn Potential>,
    sigma2: f64,
}

impl SeparableHamiltonian {
    /// Validates the gradient against central finite differences (1e-5
    /// relative) on a fixed set of probe points.
    pub fn new(potential: Arc<dyn Potential>, sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!("momentum variance {sigma2}")));
        }
        let d = potential.dim();
        for k in 0..7 {
            let probe: Vec<f64> = (0..d).map(|i| -1.5 + 0.5 * k as f64 + 0.13 * i as f64).collect();
            let error = gradient_check(potential.as_ref(), &probe);
            if !(error <= 1e-5) {
                return Err(Error::GradientMismatch { error });
            }
        }
        Ok(Self { potential, sigma2 })
    }

    pub fn potential(&self) -> &dyn Potential {
        self.potential.as_ref()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn energy(&self, state: &PhaseState) -> f64 {
        let kinetic: f64 = state.v.iter().map(|v| v * v).sum::<f64>() / (2.0 * self.sigma2);
        self.potential.value(&state.x) + kinetic
    }
}

/// `nleap` Störmer–Verlet steps `B(t/2) A(t) B(t/2)` with
/// `A(t): x <- x + t v / sigma^2` and `B(t): v <- v - t grad U(x)`.
pub fn leapfrog(state: &PhaseState, h: &SeparableHamiltonian, step: f64, nleap: usize) -> PhaseState {
    let mut x = state.x.clone();
    let mut v = state.v.clone();
    let mut grad = h.potential.gradient(&x);
    for _ in 0..nleap {
        for (vi, gi) in v.iter_mut().zip(&grad) {
            *vi -= 0.5 * step * gi;
        }
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += step * vi / h.sigma2;
        }
        grad = h.potential.gradient(&x);
        for (vi, gi) in v.iter_mut().zip(&grad) {
            *vi -= 0.5 * step * gi;
        }
    }
    PhaseState { x, v }
}

/// Result of one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: PhaseState,
    /// Index `k` of the accepted flow iterate, `0` when the momentum was flipped.
    pub accepted: usize,
    /// Number of non-finite energies met (each treated as a rejection).
    pub overflows: usize,
}

fn validate_step(step: f64, nleap: usize) -> Result<()> {
    if !(step.is_finite() && step > 0.0) || nleap == 0 {
        return Err(Error::InvalidParameter(format!("step {step}, nleap {nleap}")));
    }
    Ok(())
}

/// `v <- v cos(omega) + v' sin(omega)` with `v' ~ N(0, sigma^2 I)`.
pub fn refresh_momentum<R: Rng + ?Sized>(state: &PhaseState, sigma2: f64, omega: f64, rng: &mut R) -> PhaseState {
    let (s, c) = omega.sin_cos();
    let sd = sigma2.sqrt();
    PhaseState {
        x: state.x.clone(),
        v: state
            .v
            .iter()
            .map(|v| v * c + sd * s * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    }
}

/// Metropolized leapfrog: move to `psi(z)` with probability
/// `phi(exp(H(z) - H(psi(z))))`, else to `xi(z)`. Draws one uniform.
pub fn ghmc_accept_stage<R: Rng + ?Sized>(
    state: &PhaseState,
    h: &SeparableHamiltonian,
    step: f64,
    nleap: usize,
    phi: &AcceptanceRule,
    rng: &mut R,
) -> Result<StepOutcome> {
    validate_step(step, nleap)?;
    let u: f64 = rng.random();
    let proposal = leapfrog(state, h, step, nleap);
    let log_r = h.energy(state) - h.energy(&proposal);
    if !log_r.is_finite() || !proposal.is_finite() {
        return Ok(StepOutcome {
            state: state.flipped(),
            accepted: 0,
            overflows: 1,
        });
    }
    Ok(if u < phi.phi_log(log_r) {
        StepOutcome { state: proposal, accepted: 1, overflows: 0 }
    } else {
        StepOutcome { state: state.flipped(), accepted: 0, overflows: 0 }
    })
}

/// Partial refreshment followed by [`ghmc_accept_stage`].
#[allow(clippy::too_many_arguments)]
pub fn ghmc_step<R: Rng + ?Sized>(
    state: &PhaseState,
    h: &SeparableHamiltonian,
    step: f64,
    nleap: usize,
    omega: f64,
    phi: &AcceptanceRule,
    rng: &mut R,
) -> Result<StepOutcome> {
    validate_omega(omega)?;
    let refreshed = refresh_momentum(state, h.sigma2, omega, rng);
    ghmc_accept_stage(&refreshed, h, step, nleap, phi, rng)
}

pub(crate) fn validate_omega(omega: f64) -> Result<()> {
    if !(omega > 0.0 && omega <= std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidParameter(format!("refresh angle {omega} outside (0, pi/2]")));
    }
    Ok(())
}

/// Extra-chance acceptance stage: with one uniform `u`, moves to the first
/// `psi^k(z)`, `k <= K`, with `u < alpha_k`, where
/// `alpha_k = max{alpha_{k-1}, min{1, exp(H(z) - H(psi^k z))}}`; flips the
/// momentum if there is none. A non-finite energy ends the search.
pub fn extra_chance_step<R: Rng + ?Sized>(
    state: &PhaseState,
    h: &SeparableHamiltonian,
    step: f64,
    nleap: usize,
    k_max: usize,
    rng: &mut R,
) -> Result<StepOutcome> {
    validate_step(step, nleap)?;
    if k_max == 0 {
        return Err(Error::InvalidParameter("extra-chance needs K >= 1".into()));
    }
    let u: f64 = rng.random();
    let h0 = h.energy(state);
    let mut alpha = 0.0f64;
    let mut current = state.clone();
    for k in 1..=k_max {
        current = leapfrog(&current, h, step, nleap);
        let log_r = h0 - h.energy(&current);
        if !log_r.is_finite() || !current.is_finite() {
            return Ok(StepOutcome { state: state.flipped(), accepted: 0, overflows: 1 });
        }
        alpha = alpha.max(log_r.min(0.0).exp());
        if u < alpha {
            return Ok(StepOutcome { state: current, accepted: k, overflows: 0 });
        }
    }
    Ok(StepOutcome { state: state.flipped(), accepted: 0, overflows: 0 })
}

/// `<g, Q (R_{pi/2} - R_omega) g>_mu` for `g(x, v) = v` and `g(x, v) = v^2`
/// in one dimension: `sigma^2 cos(omega)` and `-2 sigma^4 cos^2(omega)`.
///
/// The two have opposite signs, so the full and partial refreshments are not
/// ordered in the sense of Dirichlet forms.
pub fn refresh_sign_witnesses(sigma2: f64, omega: f64) -> (f64, f64) {
    let c = omega.cos();
    (sigma2 * c, -2.0 * sigma2 * sigma2 * c * c)
}

/// Monte Carlo version of [`refresh_sign_witnesses`] from `samples` draws of
/// `v ~ N(0, sigma^2)`, using the conditional expectations of both refreshments.
pub fn refresh_sign_witnesses_mc<R: Rng + ?Sized>(sigma2: f64, omega: f64, samples: usize, rng: &mut R) -> (f64, f64) {
    let c = omega.cos();
    let sd = sigma2.sqrt();
    let (mut first, mut second) = (0.0, 0.0);
    for _ in 0..samples {
        let v = sd * rng.sample::<f64, _>(StandardNormal);
        // (R_{pi/2} - R_omega) g evaluated at (x, -v), then paired with g(x, v).
        let w = -v;
        first += v * (0.0 - w * c);
        second += v * v * (sigma2 - (w * w * c * c + sigma2 * (1.0 - c * c)));
    }
    (first / samples as f64, second / samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nonrev_core::potential::{DoubleWellPotential, GaussianPotential};
    use nonrev_core::rng;
    use nonrev_core::stats::mean_and_se;

    fn gaussian(d: usize) -> SeparableHamiltonian {
        SeparableHamiltonian::new(Arc::new(GaussianPotential::standard(d).unwrap()), 1.0).unwrap()
    }

    #[test]
    fn leapfrog_is_time_reversible() {
        let h = SeparableHamiltonian::new(Arc::new(DoubleWellPotential::new(0.5, 1.0, 3).unwrap()), 1.7).unwrap();
        let mut gen = rng::stream(1, 0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| gen.random::<f64>() * 4.0 - 2.0).collect();
            let v: Vec<f64> = (0..3).map(|_| gen.sample::<f64, _>(StandardNormal)).collect();
            let z = PhaseState::new(x, v).unwrap();
            let back = leapfrog(&leapfrog(&z, &h, 0.1, 7).flipped(), &h, 0.1, 7).flipped();
            for (a, b) in back.x.iter().chain(&back.v).zip(z.x.iter().chain(&z.v)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn small_steps_accept_almost_surely() {
        let h = gaussian(1);
        let mut gen = rng::stream(2, 0);
        let mut state = PhaseState::new(vec![0.3], vec![1.0]).unwrap();
        let mut accepted = 0;
        let n = 2000;
        for _ in 0..n {
            let out = ghmc_step(&state, &h, 1e-3, 1000, 1.0, &AcceptanceRule::Metropolis, &mut gen).unwrap();
            accepted += out.accepted;
            state = out.state;
        }
        assert!(accepted as f64 / n as f64 > 0.999);
    }

    #[test]
    fn ghmc_preserves_gaussian_moments() {
        let h = gaussian(1);
        let sigma2 = h.sigma2();
        let stats = rng::run_replicates(3, 16, |_, mut gen| {
            let mut state = PhaseState::new(vec![0.0], vec![0.0]).unwrap();
            let (mut m1, mut m2, mut v2) = (0.0, 0.0, 0.0);
            let n = 20_000;
            for _ in 0..n {
                state = ghmc_step(&state, &h, 0.4, 4, 0.7, &AcceptanceRule::Barker, &mut gen).unwrap().state;
                m1 += state.x[0];
                m2 += state.x[0] * state.x[0];
                v2 += state.v[0] * state.v[0];
            }
            [m1 / n as f64, m2 / n as f64, v2 / n as f64]
        });
        for (k, target) in [0.0, 1.0, sigma2].into_iter().enumerate() {
            let values: Vec<f64> = stats.iter().map(|s| s[k]).collect();
            let (m, se) = mean_and_se(&values);
            assert!((m - target).abs() < 3.0 * se.max(1e-3), "moment {k}: {m} ± {se}");
        }
    }

    #[test]
    fn extra_chance_single_stage_matches_ghmc() {
        let h = gaussian(2);
        let mut a = rng::stream(4, 0);
        let mut b = rng::stream(4, 0);
        let mut state = PhaseState::new(vec![1.0, -0.5], vec![0.2, 0.9]).unwrap();
        for _ in 0..500 {
            let ghmc = ghmc_accept_stage(&state, &h, 0.9, 3, &AcceptanceRule::Metropolis, &mut a).unwrap();
            let extra = extra_chance_step(&state, &h, 0.9, 3, 1, &mut b).unwrap();
            assert_eq!(ghmc, extra);
            state = refresh_momentum(&ghmc.state, 1.0, 0.5, &mut a);
            let _ = refresh_momentum(&extra.state, 1.0, 0.5, &mut b);
        }
    }

    #[test]
    fn zero_potential_always_moves() {
        #[derive(Debug)]
        struct Flat;
        impl Potential for Flat {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, _x: &[f64]) -> f64 {
                0.0
            }
            fn partial(&self, _x: &[f64], _i: usize) -> f64 {
                0.0
            }
        }
        let h = SeparableHamiltonian::new(Arc::new(Flat), 1.0).unwrap();
        let mut gen = rng::stream(5, 0);
        let state = PhaseState::new(vec![0.0], vec![1.3]).unwrap();
        for _ in 0..100 {
            assert_eq!(extra_chance_step(&state, &h, 0.5, 2, 3, &mut gen).unwrap().accepted, 1);
        }
    }

    #[test]
    fn extra_chances_reduce_rejections() {
        let h = gaussian(1);
        let rejections = |k: usize| {
            let mut gen = rng::stream(6, 0);
            let mut state = PhaseState::new(vec![0.0], vec![1.0]).unwrap();
            let mut rejected = 0;
            for _ in 0..50_000 {
                state = refresh_momentum(&state, 1.0, std::f64::consts::FRAC_PI_2, &mut gen);
                let out = extra_chance_step(&state, &h, 1.8, 1, k, &mut gen).unwrap();
                rejected += usize::from(out.accepted == 0);
                state = out.state;
            }
            rejected
        };
        let (one, three) = (rejections(1), rejections(3));
        assert!(one > 1000, "step too small to reject: {one}");
        assert!(three <= one, "{three} > {one}");
    }

    #[test]
    fn overflow_is_a_rejection() {
        let h = SeparableHamiltonian::new(Arc::new(DoubleWellPotential::new(1.0, 1.0, 1).unwrap()), 1.0).unwrap();
        let mut gen = rng::stream(7, 0);
        let state = PhaseState::new(vec![3.0], vec![1e3]).unwrap();
        let out = ghmc_accept_stage(&state, &h, 1.0, 50, &AcceptanceRule::Metropolis, &mut gen).unwrap();
        assert_eq!(out.overflows, 1);
        assert_eq!(out.state, state.flipped());
    }

    #[test]
    fn witnesses_have_opposite_signs() {
        let (a, b) = refresh_sign_witnesses(2.0, 0.6);
        assert!(a > 0.0 && b < 0.0);
        let (ma, mb) = refresh_sign_witnesses_mc(2.0, 0.6, 400_000, &mut rng::stream(8, 0));
        assert!((ma - a).abs() < 0.05 && (mb - b).abs() < 0.2, "{ma} {mb} vs {a} {b}");
    }

    #[test]
    fn invalid_inputs() {
        let h = gaussian(1);
        let state = PhaseState::new(vec![0.0], vec![0.0]).unwrap();
        let mut gen = rng::stream(9, 0);
        assert!(ghmc_step(&state, &h, 0.0, 1, 1.0, &AcceptanceRule::Metropolis, &mut gen).is_err());
        assert!(ghmc_step(&state, &h, 0.1, 1, 2.0, &AcceptanceRule::Metropolis, &mut gen).is_err());
        assert!(PhaseState::new(vec![f64::NAN], vec![0.0]).is_err());
    }
}
