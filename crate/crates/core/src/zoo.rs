//! Constructors for finite-state kernel families.
//!
//! Lifted state spaces `X x {-1, 1}` are enumerated as `2 x + (v < 0)`, so the
//! velocity flip toggles the lowest bit. Pair spaces `X x X` are enumerated as
//! `x1 * |X| + x2`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::finite::{
    check_reversible, dominance_certified, var_lambda, var_lambda_cycle, DeterministicInvolution,
    FiniteDistribution, KernelMatrix, Observable, Side, ORDERING_TOL, STRUCTURAL_TOL,
};

/// Kernel together with the reference distribution and involution it is analyzed under.
#[derive(Debug, Clone, PartialEq)]
pub struct ZooKernel {
    pub kernel: KernelMatrix,
    pub mu: FiniteDistribution,
    pub involution: DeterministicInvolution,
}

/// Index of `(x, v)` in the lifted space.
pub fn lifted_index(x: usize, v: i8) -> usize {
    2 * x + usize::from(v < 0)
}

/// Inverse of [`lifted_index`].
pub fn lifted_state(index: usize) -> (usize, i8) {
    (index / 2, if index.is_multiple_of(2) { 1 } else { -1 })
}

/// `(x, v) -> (x, -v)` on `n` positions.
pub fn velocity_flip(n: usize) -> DeterministicInvolution {
    DeterministicInvolution::new((0..2 * n).map(|i| i ^ 1).collect()).expect("bit flip is an involution")
}

/// `mu(x, v) = pi(x) / 2`.
pub fn lift_distribution(pi: &FiniteDistribution) -> FiniteDistribution {
    FiniteDistribution::new(pi.weights().iter().flat_map(|&p| [0.5 * p, 0.5 * p]).collect())
        .expect("lift of a distribution is a distribution")
}

/// `f_breve(x, v) = f(x)`.
pub fn lift_observable(f: &Observable) -> Observable {
    Observable::new(f.values().iter().flat_map(|&a| [a, a]).collect()).expect("finite values")
}

/// Target on the ring `Z_n` given by unnormalized positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RingTarget {
    pi: FiniteDistribution,
}

impl RingTarget {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 3 {
            return Err(Error::InvalidParameter(format!(
                "ring needs at least 3 states, got {}",
                weights.len()
            )));
        }
        Ok(Self {
            pi: FiniteDistribution::from_unnormalized(weights)?,
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pi(&self) -> &FiniteDistribution {
        &self.pi
    }

    /// `x + k mod n`.
    pub fn shift(&self, x: usize, k: i64) -> usize {
        (x as i64 + k).rem_euclid(self.len() as i64) as usize
    }
}

/// `num / den` when both are positive, `0` otherwise.
pub fn density_ratio(num: f64, den: f64) -> f64 {
    if num > 0.0 && den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Kernel on `Z_n x {-1, 1}` moving `x -> x + v` with probability
/// `min{1, pi(x + v) / pi(x)}` and flipping `v` otherwise.
pub fn gustafson_ring(target: &RingTarget) -> Result<ZooKernel> {
    let n = target.len();
    let pi = target.pi();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for x in 0..n {
        for v in [1i8, -1] {
            let y = target.shift(x, v as i64);
            let alpha = density_ratio(pi.weight(y), pi.weight(x)).min(1.0);
            let from = lifted_index(x, v);
            m[(from, lifted_index(y, v))] += alpha;
            m[(from, lifted_index(x, -v))] += 1.0 - alpha;
        }
    }
    Ok(ZooKernel {
        kernel: KernelMatrix::new(m)?,
        mu: lift_distribution(pi),
        involution: velocity_flip(n),
    })
}

/// Direction-dependent sub-stochastic kernels `T_{+1}, T_{-1}` on `X` with
/// `pi(x) T_{+1}(x, y) = pi(y) T_{-1}(y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubKernelPair {
    plus: DMatrix<f64>,
    minus: DMatrix<f64>,
    pi: FiniteDistribution,
}

impl SubKernelPair {
    pub fn new(plus: DMatrix<f64>, minus: DMatrix<f64>, pi: FiniteDistribution) -> Result<Self> {
        let n = pi.len();
        for m in [&plus, &minus] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, found: m.nrows().max(m.ncols()) });
            }
            for row in 0..n {
                let mut sum = 0.0;
                for col in 0..n {
                    let value = m[(row, col)];
                    if !(0.0..=1.0).contains(&value) {
                        return Err(Error::EntryOutOfRange { row, col, value });
                    }
                    sum += value;
                }
                if sum > 1.0 + 1e-12 {
                    return Err(Error::RowSum { row, sum });
                }
            }
        }
        let residual = (0..n)
            .flat_map(|x| (0..n).map(move |y| (x, y)))
            .map(|(x, y)| (pi.weight(x) * plus[(x, y)] - pi.weight(y) * minus[(y, x)]).abs())
            .fold(0.0, f64::max);
        if residual > STRUCTURAL_TOL {
            return Err(Error::NotReversible);
        }
        Ok(Self { plus, minus, pi })
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pi(&self) -> &FiniteDistribution {
        &self.pi
    }

    pub fn sub_kernel(&self, v: i8) -> &DMatrix<f64> {
        if v > 0 {
            &self.plus
        } else {
            &self.minus
        }
    }

    /// `T_v(x, X)`.
    pub fn total(&self, v: i8, x: usize) -> f64 {
        self.sub_kernel(v).row(x).sum()
    }
}

/// Metropolis–Hastings sub-kernels `T_v(x, y) = min{1, r_v(x, y)} q_v(x, y)` with
/// `r_v(x, y) = pi(y) q_{-v}(y, x) / (pi(x) q_v(x, y))`.
pub fn mh_subkernels(target: &RingTarget, q_plus: &KernelMatrix, q_minus: &KernelMatrix) -> Result<SubKernelPair> {
    let n = target.len();
    for q in [q_plus, q_minus] {
        if q.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: q.dim() });
        }
    }
    let pi = target.pi();
    let build = |q: &KernelMatrix, reverse: &KernelMatrix| {
        DMatrix::from_fn(n, n, |x, y| {
            let forward = pi.weight(x) * q.entry(x, y);
            let backward = pi.weight(y) * reverse.entry(y, x);
            density_ratio(backward, forward).min(1.0) * q.entry(x, y)
        })
    };
    SubKernelPair::new(build(q_plus, q_minus), build(q_minus, q_plus), pi.clone())
}

/// Rate `rho_{v,-v}(x)` of switching direction in place.
#[derive(Debug, Clone, PartialEq)]
pub enum SwitchingRate {
    /// `max{0, T_{-v}(x, X) - T_v(x, X)}`.
    Minimal,
    /// `1 - T_v(x, X)`: never stay put.
    Maximal,
    /// `(1 - theta) * minimal + theta * maximal`.
    Convex(f64),
    /// Explicit `rho_{+1,-1}(x)` and `rho_{-1,+1}(x)`.
    Custom { plus: Vec<f64>, minus: Vec<f64> },
}

impl SwitchingRate {
    /// `(rho_{+1,-1}, rho_{-1,+1})` per position, validated against `pair`.
    pub fn rates(&self, pair: &SubKernelPair) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = pair.len();
        let minimal = |v: i8, x: usize| (pair.total(-v, x) - pair.total(v, x)).max(0.0);
        let maximal = |v: i8, x: usize| 1.0 - pair.total(v, x);
        let (plus, minus): (Vec<f64>, Vec<f64>) = match self {
            SwitchingRate::Minimal => ((0..n).map(|x| minimal(1, x)).collect(), (0..n).map(|x| minimal(-1, x)).collect()),
            SwitchingRate::Maximal => ((0..n).map(|x| maximal(1, x)).collect(), (0..n).map(|x| maximal(-1, x)).collect()),
            SwitchingRate::Convex(theta) => {
                if !(0.0..=1.0).contains(theta) {
                    return Err(Error::InvalidParameter(format!("convex weight {theta}")));
                }
                let mix = |v: i8, x: usize| (1.0 - theta) * minimal(v, x) + theta * maximal(v, x);
                ((0..n).map(|x| mix(1, x)).collect(), (0..n).map(|x| mix(-1, x)).collect())
            }
            SwitchingRate::Custom { plus, minus } => {
                if plus.len() != n || minus.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: plus.len().min(minus.len()) });
                }
                (plus.clone(), minus.clone())
            }
        };
        for x in 0..n {
            for (v, rho) in [(1i8, plus[x]), (-1, minus[x])] {
                if !(rho >= -STRUCTURAL_TOL && rho <= maximal(v, x) + STRUCTURAL_TOL) {
                    return Err(Error::InvalidParameter(format!(
                        "switching rate {rho} at x={x}, v={v} outside [0, 1 - T_v(x, X)]"
                    )));
                }
            }
            let balance = (plus[x] - minus[x]) - (pair.total(-1, x) - pair.total(1, x));
            if balance.abs() > STRUCTURAL_TOL {
                return Err(Error::InvalidParameter(format!(
                    "switching rates at x={x} violate rho_(+,-) - rho_(-,+) = T_-(x,X) - T_+(x,X)"
                )));
            }
        }
        Ok((plus, minus))
    }
}

/// Lifted kernel on `X x {-1, 1}`: move with `T_v` keeping `v`, switch to `-v`
/// in place at rate `rho_{v,-v}(x)`, otherwise stay.
pub fn lifted_kernel(pair: &SubKernelPair, rate: &SwitchingRate) -> Result<ZooKernel> {
    let (rho_plus, rho_minus) = rate.rates(pair)?;
    let n = pair.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for x in 0..n {
        for v in [1i8, -1] {
            let t = pair.sub_kernel(v);
            let rho = if v > 0 { rho_plus[x] } else { rho_minus[x] }.max(0.0);
            let from = lifted_index(x, v);
            for y in 0..n {
                m[(from, lifted_index(y, v))] += t[(x, y)];
            }
            m[(from, from)] += (1.0 - pair.total(v, x) - rho).max(0.0);
            m[(from, lifted_index(x, -v))] += rho;
        }
    }
    Ok(ZooKernel {
        kernel: KernelMatrix::new(m)?,
        mu: lift_distribution(pair.pi()),
        involution: velocity_flip(n),
    })
}

/// `pi`-reversible kernel `(T_{+1} + T_{-1}) / 2` plus rejection mass on the diagonal.
pub fn collapsed_kernel(pair: &SubKernelPair) -> Result<KernelMatrix> {
    let n = pair.len();
    let mut m = (pair.sub_kernel(1) + pair.sub_kernel(-1)) * 0.5;
    for x in 0..n {
        m[(x, x)] += 1.0 - 0.5 * (pair.total(1, x) + pair.total(-1, x));
    }
    KernelMatrix::new(m)
}

fn validate_steps(target: &RingTarget, steps: &[f64]) -> Result<()> {
    if steps.is_empty() || 2 * steps.len() >= target.len() {
        return Err(Error::InvalidParameter(format!(
            "step support 1..{} must satisfy m < n/2 for n = {}",
            steps.len(),
            target.len()
        )));
    }
    if steps.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (steps.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter("step magnitudes must form a distribution".into()));
    }
    Ok(())
}

/// Guided-walk sub-kernels on the ring: jump `|z| v` with `|z| = k` drawn with
/// probability `steps[k - 1]`, accepted with probability `min{1, pi(x + |z| v) / pi(x)}`.
pub fn guided_walk_ring(target: &RingTarget, steps: &[f64]) -> Result<SubKernelPair> {
    validate_steps(target, steps)?;
    let n = target.len();
    let pi = target.pi();
    let build = |v: i64| {
        let mut m = DMatrix::zeros(n, n);
        for x in 0..n {
            for (k, &p) in steps.iter().enumerate() {
                let y = target.shift(x, v * (k as i64 + 1));
                m[(x, y)] += p * density_ratio(pi.weight(y), pi.weight(x)).min(1.0);
            }
        }
        m
    };
    SubKernelPair::new(build(1), build(-1), pi.clone())
}

/// Random-walk Metropolis on the ring with symmetric increments `+-k`, each
/// with probability `steps[k - 1] / 2`.
pub fn random_walk_metropolis_ring(target: &RingTarget, steps: &[f64]) -> Result<KernelMatrix> {
    validate_steps(target, steps)?;
    let n = target.len();
    let pi = target.pi();
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        let mut stay = 1.0;
        for (k, &p) in steps.iter().enumerate() {
            for sign in [1i64, -1] {
                let y = target.shift(x, sign * (k as i64 + 1));
                let move_prob = 0.5 * p * (pi.weight(y) / pi.weight(x)).min(1.0);
                m[(x, y)] += move_prob;
                stay -= move_prob;
            }
        }
        m[(x, x)] += stay;
    }
    KernelMatrix::new(m)
}

/// Kernels of a reversible chain and of its non-backtracking modification,
/// both written on the pair space `(X_k, X_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct NealPair {
    /// Non-backtracking chain `Q M_1`.
    pub p1: KernelMatrix,
    /// Original chain `Q M_2`.
    pub p2: KernelMatrix,
    /// `mu(x1, x2) = pi(x1) T2(x1, x2)`.
    pub mu: FiniteDistribution,
    /// Coordinate swap.
    pub swap: DeterministicInvolution,
}

pub fn pair_index(m: usize, x1: usize, x2: usize) -> usize {
    x1 * m + x2
}

/// `g(x1, x2) = f(x1) + f(x2)`.
pub fn pair_sum_observable(f: &Observable) -> Observable {
    let m = f.len();
    let v = f.values();
    Observable::from_fn(m * m, |i| v[i / m] + v[i % m]).expect("finite values")
}

/// `f_breve(x1, x2) = f(x1)`.
pub fn pair_first_observable(f: &Observable) -> Observable {
    let m = f.len();
    let v = f.values();
    Observable::from_fn(m * m, |i| v[i / m]).expect("finite values")
}

/// Pair-space kernels for a `pi`-reversible `T2` with all entries in `(0, 1)`.
///
/// `M_2` resamples the second coordinate from `T2(x1, .)`. `M_1` instead
/// proposes `y2 != x2` with probability `T2(x1, y2) / (1 - T2(x1, x2))` and
/// accepts with probability `min{1, (1 - T2(x1, x2)) / (1 - T2(x1, y2))}`.
pub fn neal_pair_kernels(t2: &KernelMatrix, pi: &FiniteDistribution) -> Result<NealPair> {
    let m = t2.dim();
    if pi.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: pi.len() });
    }
    for row in 0..m {
        for col in 0..m {
            let value = t2.entry(row, col);
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::EntryOutOfRange { row, col, value });
            }
        }
    }
    if !check_reversible(t2, pi)? {
        return Err(Error::NotReversible);
    }
    let size = m * m;
    let mu = FiniteDistribution::from_unnormalized(
        (0..size).map(|i| pi.weight(i / m) * t2.entry(i / m, i % m)).collect(),
    )?;
    let swap = DeterministicInvolution::new((0..size).map(|i| pair_index(m, i % m, i / m)).collect())?;
    let mut m1 = DMatrix::zeros(size, size);
    let mut m2 = DMatrix::zeros(size, size);
    for x1 in 0..m {
        for x2 in 0..m {
            let from = pair_index(m, x1, x2);
            let stay_x2 = t2.entry(x1, x2);
            let mut moved = 0.0;
            for y2 in 0..m {
                let to = pair_index(m, x1, y2);
                m2[(from, to)] = t2.entry(x1, y2);
                if y2 != x2 {
                    let u = t2.entry(x1, y2) / (1.0 - stay_x2) * ((1.0 - stay_x2) / (1.0 - t2.entry(x1, y2))).min(1.0);
                    m1[(from, to)] = u;
                    moved += u;
                }
            }
            m1[(from, from)] = (1.0 - moved).max(0.0);
        }
    }
    let p1 = swap.left_compose(&KernelMatrix::new(m1)?)?;
    let p2 = swap.left_compose(&KernelMatrix::new(m2)?)?;
    Ok(NealPair { p1, p2, mu, swap })
}

/// Acceptance function `phi` with `r phi(1/r) = phi(r)` and `phi(0) = 0`.
#[derive(Clone)]
pub enum AcceptanceRule {
    /// `min{1, r}`.
    Metropolis,
    /// `r / (1 + r)`.
    Barker,
    Custom {
        name: String,
        phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for AcceptanceRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl AcceptanceRule {
    pub fn name(&self) -> String {
        match self {
            AcceptanceRule::Metropolis => "metropolis".into(),
            AcceptanceRule::Barker => "barker".into(),
            AcceptanceRule::Custom { name, .. } => name.clone(),
        }
    }

    pub fn phi(&self, r: f64) -> f64 {
        match self {
            AcceptanceRule::Metropolis => r.min(1.0),
            AcceptanceRule::Barker if r.is_infinite() => 1.0,
            AcceptanceRule::Barker => r / (1.0 + r),
            AcceptanceRule::Custom { phi, .. } => phi(r),
        }
    }

    /// `phi(exp(log_r))`, stable for large `|log_r|`.
    pub fn phi_log(&self, log_r: f64) -> f64 {
        match self {
            AcceptanceRule::Metropolis => log_r.min(0.0).exp(),
            AcceptanceRule::Barker => 1.0 / (1.0 + (-log_r).exp()),
            AcceptanceRule::Custom { phi, .. } => phi(log_r.exp()),
        }
    }

    /// Checks the balance condition on a log-spaced grid, `phi(0) = 0` and
    /// `0 <= phi(r) <= min{1, r}`.
    pub fn validate(&self) -> Result<()> {
        if self.phi(0.0) != 0.0 {
            return Err(Error::InvalidParameter(format!("{}: phi(0) != 0", self.name())));
        }
        for k in 0..=240 {
            let r = 10f64.powf(-6.0 + 0.05 * k as f64);
            let value = self.phi(r);
            if !(value >= 0.0 && value <= r.min(1.0) + 1e-12) {
                return Err(Error::InvalidParameter(format!("{}: phi({r}) = {value}", self.name())));
            }
            if (r * self.phi(1.0 / r) - value).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "{}: r phi(1/r) != phi(r) at r = {r}",
                    self.name()
                )));
            }
        }
        Ok(())
    }
}

/// Bijection `psi` on an enumerated state space satisfying `psi^{-1} = xi o psi o xi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowMap {
    perm: Vec<usize>,
}

impl FlowMap {
    pub fn new(perm: Vec<usize>, q: &DeterministicInvolution) -> Result<Self> {
        let n = perm.len();
        if q.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: q.len() });
        }
        let mut seen = vec![false; n];
        for (state, &image) in perm.iter().enumerate() {
            if image >= n || seen[image] {
                return Err(Error::NotBijection { state });
            }
            seen[image] = true;
        }
        for z in 0..n {
            // psi(xi(psi(xi(z)))) = z.
            if perm[q.image(perm[q.image(z)])] != z {
                return Err(Error::FlowNotTimeReversible { state: z });
            }
        }
        Ok(Self { perm })
    }

    /// `(x, v) -> (x + v mod n, v)` on the lifted ring.
    pub fn ring_shift(n: usize) -> Self {
        let perm = (0..2 * n)
            .map(|i| {
                let (x, v) = lifted_state(i);
                lifted_index((x as i64 + v as i64).rem_euclid(n as i64) as usize, v)
            })
            .collect();
        Self::new(perm, &velocity_flip(n)).expect("ring shift is time reversible")
    }

    pub fn image(&self, state: usize) -> usize {
        self.perm[state]
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// `psi^k(state)`.
    pub fn iterate(&self, state: usize, k: usize) -> usize {
        (0..k).fold(state, |z, _| self.perm[z])
    }
}

fn check_flow_dims(mu: &FiniteDistribution, psi: &FlowMap, q: &DeterministicInvolution) -> Result<()> {
    for found in [psi.len(), q.len()] {
        if found != mu.len() {
            return Err(Error::DimensionMismatch { expected: mu.len(), found });
        }
    }
    Ok(())
}

/// `P(z) = phi(r(z)) delta_{psi(z)} + (1 - phi(r(z))) delta_{xi(z)}` with
/// `r(z) = mu(xi(psi(z))) / mu(z)`.
pub fn metropolized_flow_finite(
    mu: &FiniteDistribution,
    psi: &FlowMap,
    q: &DeterministicInvolution,
    phi: &AcceptanceRule,
) -> Result<KernelMatrix> {
    check_flow_dims(mu, psi, q)?;
    let n = mu.len();
    let mut m = DMatrix::zeros(n, n);
    for z in 0..n {
        let target = psi.image(z);
        let r = density_ratio(mu.weight(q.image(target)), mu.weight(z));
        let accept = phi.phi(r);
        m[(z, target)] += accept;
        m[(z, q.image(z))] += 1.0 - accept;
    }
    KernelMatrix::new(m)
}

/// Extra-chance kernel: try `psi^k(z)` for `k = 1..K` with cumulative
/// acceptance `alpha_k = max{alpha_{k-1}, min{1, r_k}}`, `r_k = mu(xi psi^k z) / mu(z)`,
/// falling back to `xi(z)`.
pub fn extra_chance_finite(
    mu: &FiniteDistribution,
    psi: &FlowMap,
    q: &DeterministicInvolution,
    k_max: usize,
) -> Result<KernelMatrix> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("extra-chance needs K >= 1".into()));
    }
    check_flow_dims(mu, psi, q)?;
    let n = mu.len();
    let mut m = DMatrix::zeros(n, n);
    for z in 0..n {
        let mut alpha = 0.0f64;
        let mut state = z;
        for _ in 0..k_max {
            state = psi.image(state);
            let r = density_ratio(mu.weight(q.image(state)), mu.weight(z));
            let next = alpha.max(r.min(1.0));
            m[(z, state)] += next - alpha;
            alpha = next;
        }
        m[(z, q.image(z))] += 1.0 - alpha;
    }
    KernelMatrix::new(m)
}

/// Flips the velocity with probability `p` on the lifted ring of `n` positions.
pub fn velocity_refresh(n: usize, p: f64) -> Result<KernelMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("refresh probability {p}")));
    }
    velocity_flip(n).as_kernel().mixture(p, &KernelMatrix::identity(2 * n))
}

/// Exact discounted variances of two alternating-kernel chains.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoCycleReport {
    pub lambdas: Vec<f64>,
    /// `var_lambda(f, {P11, P12})`.
    pub first: Vec<f64>,
    /// `var_lambda(f, {P21, P22})`.
    pub second: Vec<f64>,
    /// `var_lambda(f, P11 P12)` and `var_lambda(f, P21 P22)`, when `P_{i,1} f = f`.
    pub products: Option<(Vec<f64>, Vec<f64>)>,
    pub max_violation: f64,
    pub holds: bool,
}

/// Compares the 2-cycles `{P11, P12}` and `{P21, P22}` for a `Q`-symmetric
/// observable, after certifying that `P1j` dominates `P2j` for both `j`.
#[allow(clippy::too_many_arguments)]
pub fn two_cycle_variance_experiment(
    p11: &KernelMatrix,
    p12: &KernelMatrix,
    p21: &KernelMatrix,
    p22: &KernelMatrix,
    mu: &FiniteDistribution,
    q: &DeterministicInvolution,
    f: &Observable,
    lambdas: &[f64],
) -> Result<TwoCycleReport> {
    if !dominance_certified(p11, p21, mu, q)? || !dominance_certified(p12, p22, mu, q)? {
        return Err(Error::HypothesisNotCertified(
            "slotwise Dirichlet dominance of the 2-cycles".into(),
        ));
    }
    if q.apply(f)?.max_abs_diff(f)? > STRUCTURAL_TOL {
        return Err(Error::InvalidParameter("observable is not Q-symmetric".into()));
    }
    let mut report = TwoCycleReport {
        lambdas: lambdas.to_vec(),
        first: Vec::with_capacity(lambdas.len()),
        second: Vec::with_capacity(lambdas.len()),
        products: None,
        max_violation: 0.0,
        holds: true,
    };
    for &lambda in lambdas {
        let a = var_lambda_cycle(f, p11, p12, mu, lambda)?;
        let b = var_lambda_cycle(f, p21, p22, mu, lambda)?;
        report.max_violation = report.max_violation.max(a - b);
        report.first.push(a);
        report.second.push(b);
    }
    let fixes = |p: &KernelMatrix| -> Result<bool> { Ok(p.apply(f)?.max_abs_diff(f)? <= STRUCTURAL_TOL) };
    if fixes(p11)? && fixes(p21)? {
        let prod1 = p11.compose(p12)?;
        let prod2 = p21.compose(p22)?;
        let mut first = Vec::new();
        let mut second = Vec::new();
        for &lambda in lambdas {
            let a = var_lambda(f, &prod1, mu, lambda)?;
            let b = var_lambda(f, &prod2, mu, lambda)?;
            report.max_violation = report.max_violation.max(a - b);
            first.push(a);
            second.push(b);
        }
        report.products = Some((first, second));
    }
    report.holds = report.max_violation <= ORDERING_TOL;
    Ok(report)
}

/// A pair of `(mu, Q)`-reversible kernels whose reversible parts on `side`
/// satisfy `E(g, part(P1)) >= E(g, part(P2))` for all `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct DominatedPair {
    pub p1: KernelMatrix,
    pub p2: KernelMatrix,
    pub mu: FiniteDistribution,
    pub q: DeterministicInvolution,
    pub side: Side,
}

/// Random `mu`-symmetric flow matrix with zero diagonal and about half its
/// entries zero, scaled so the largest off-diagonal row mass of `W / mu` is `scale`.
fn random_flow<R: Rng + ?Sized>(mu: &FiniteDistribution, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let n = mu.len();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(0.6) {
                let value: f64 = rng.random();
                w[(i, j)] = value;
                w[(j, i)] = value;
            }
        }
    }
    let worst = (0..n)
        .map(|i| w.row(i).sum() / mu.weight(i))
        .fold(0.0, f64::max);
    if worst > 0.0 {
        w *= scale / worst;
    }
    w
}

/// Random dominated pair on `n` states.
///
/// `mu` is constant on the orbits of a random involution. `K2` is a random
/// `mu`-reversible kernel and `K1 = K2 + L` with `L` the generator of another
/// random symmetric flow, so `E(g, K1) - E(g, K2) = 1/2 sum w (g(z) - g(z'))^2 >= 0`.
/// Then `P_i = Q K_i` (left) or `K_i Q` (right), whose reversible part on that side is `K_i`.
pub fn random_dominated_pair<R: Rng + ?Sized>(n: usize, side: Side, rng: &mut R) -> Result<DominatedPair> {
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two states".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let swapped_pairs = rng.random_range(1..=n / 2);
    let mut perm: Vec<usize> = (0..n).collect();
    for p in 0..swapped_pairs {
        let (a, b) = (order[2 * p], order[2 * p + 1]);
        perm[a] = b;
        perm[b] = a;
    }
    let q = DeterministicInvolution::new(perm)?;
    let mut weights = vec![0.0; n];
    for z in 0..n {
        if weights[z] == 0.0 {
            let w = 0.2 + rng.random::<f64>();
            weights[z] = w;
            weights[q.image(z)] = w;
        }
    }
    let mu = FiniteDistribution::from_unnormalized(weights)?;
    let kernel_from_flows = |w: &DMatrix<f64>| -> Result<KernelMatrix> {
        let mut k = DMatrix::from_fn(n, n, |i, j| w[(i, j)] / mu.weight(i));
        for i in 0..n {
            let out: f64 = (0..n).filter(|&j| j != i).map(|j| k[(i, j)]).sum();
            k[(i, i)] = 1.0 - out;
        }
        KernelMatrix::new(k)
    };
    let base = random_flow(&mu, 0.5, rng);
    let extra = random_flow(&mu, 0.45, rng);
    let k2 = kernel_from_flows(&base)?;
    let k1 = kernel_from_flows(&(&base + &extra))?;
    let (p1, p2) = match side {
        Side::Left => (q.as_kernel().compose(&k1)?, q.as_kernel().compose(&k2)?),
        Side::Right => (k1.compose(&q.as_kernel())?, k2.compose(&q.as_kernel())?),
    };
    Ok(DominatedPair { p1, p2, mu, q, side })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite::{
        adjoint, check_invariance, check_muq_reversible, detailed_balance_residual, dirichlet_dominance_certificate,
        dirichlet_form, reversible_parts,
    };
    use crate::rng;
    use approx::assert_abs_diff_eq;

    fn bump() -> RingTarget {
        RingTarget::new(vec![1.0, 2.0, 3.0, 2.0, 1.0]).unwrap()
    }

    fn assert_structure(k: &ZooKernel) {
        assert!(check_invariance(&k.kernel, &k.mu).unwrap());
        assert!(check_muq_reversible(&k.kernel, &k.mu, &k.involution).unwrap());
    }

    fn ring_shift_kernel(target: &RingTarget, k: i64) -> KernelMatrix {
        KernelMatrix::from_map(&(0..target.len()).map(|x| target.shift(x, k)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn gustafson_uniform_is_rotation() {
        let target = RingTarget::uniform(6).unwrap();
        let k = gustafson_ring(&target).unwrap();
        for i in 0..12 {
            let (x, v) = lifted_state(i);
            assert_eq!(k.kernel.entry(i, lifted_index(target.shift(x, v as i64), v)), 1.0);
        }
        assert_structure(&k);
    }

    #[test]
    fn gustafson_bump_brute_force() {
        let k = gustafson_ring(&bump()).unwrap();
        assert_structure(&k);
        // mu(x,v) P(x,v; y,w) = mu(y,w) P(y,-w; x,-v).
        for a in 0..10 {
            for b in 0..10 {
                let lhs = k.mu.weight(a) * k.kernel.entry(a, b);
                let rhs = k.mu.weight(b) * k.kernel.entry(b ^ 1, a ^ 1);
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-15);
            }
        }
        assert!(RingTarget::new(vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn mh_subkernels_examples() {
        let target = bump();
        let n = target.len();
        let uniform_q = KernelMatrix::new(DMatrix::from_element(n, n, 1.0 / n as f64)).unwrap();
        let pair = mh_subkernels(&target, &uniform_q, &uniform_q).unwrap();
        assert_eq!(pair.sub_kernel(1), pair.sub_kernel(-1));
        let right = ring_shift_kernel(&target, 1);
        let left = ring_shift_kernel(&target, -1);
        let pair = mh_subkernels(&target, &right, &left).unwrap();
        assert_abs_diff_eq!(pair.sub_kernel(1)[(0, 1)], 1.0);
        assert_abs_diff_eq!(pair.sub_kernel(1)[(2, 3)], 2.0 / 3.0, epsilon = 1e-15);
        let flat = RingTarget::uniform(5).unwrap();
        let pair = mh_subkernels(&flat, &right, &left).unwrap();
        for x in 0..5 {
            assert_abs_diff_eq!(pair.total(1, x), 1.0);
            assert_abs_diff_eq!(pair.total(-1, x), 1.0);
        }
    }

    #[test]
    fn subkernel_pair_rejects_broken_balance() {
        let pi = FiniteDistribution::uniform(3).unwrap();
        let mut plus = DMatrix::zeros(3, 3);
        plus[(0, 1)] = 0.5;
        assert!(matches!(
            SubKernelPair::new(plus, DMatrix::zeros(3, 3), pi),
            Err(Error::NotReversible)
        ));
    }

    #[test]
    fn lifted_kernels_are_structured() {
        let target = bump();
        let pair = guided_walk_ring(&target, &[1.0]).unwrap();
        for rate in [
            SwitchingRate::Minimal,
            SwitchingRate::Maximal,
            SwitchingRate::Convex(0.5),
        ] {
            let k = lifted_kernel(&pair, &rate).unwrap();
            assert_structure(&k);
            // No move in x together with a direction switch.
            for x in 0..5 {
                for y in 0..5 {
                    if x != y {
                        assert_eq!(k.kernel.entry(lifted_index(x, 1), lifted_index(y, -1)), 0.0);
                    }
                }
            }
        }
        let (plus, minus) = SwitchingRate::Minimal.rates(&pair).unwrap();
        for x in 0..5 {
            assert_abs_diff_eq!(plus[x], (pair.total(-1, x) - pair.total(1, x)).max(0.0));
            assert!(plus[x] >= 0.0 && minus[x] >= 0.0);
        }
        let bad = SwitchingRate::Custom { plus: vec![0.0; 5], minus: vec![0.0; 5] };
        assert!(lifted_kernel(&pair, &bad).is_err());
    }

    #[test]
    fn maximal_guided_walk_is_gustafson() {
        let target = bump();
        let pair = guided_walk_ring(&target, &[1.0]).unwrap();
        let lifted = lifted_kernel(&pair, &SwitchingRate::Maximal).unwrap();
        assert_eq!(lifted.kernel, gustafson_ring(&target).unwrap().kernel);
    }

    #[test]
    fn collapsed_kernel_examples() {
        let target = RingTarget::new(vec![1.0, 2.0, 3.0, 2.0, 1.0, 4.0, 1.5]).unwrap();
        let steps = [0.5, 0.3, 0.2];
        let pair = guided_walk_ring(&target, &steps).unwrap();
        let collapsed = collapsed_kernel(&pair).unwrap();
        let rw = random_walk_metropolis_ring(&target, &steps).unwrap();
        assert!(max_entry_diff(&collapsed, &rw) < 1e-15);
        assert!(detailed_balance_residual(&collapsed, target.pi()).unwrap() < 1e-15);
        assert!(guided_walk_ring(&target, &[0.25; 4]).is_err());
    }

    fn max_entry_diff(a: &KernelMatrix, b: &KernelMatrix) -> f64 {
        a.matrix().iter().zip(b.matrix().iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn symmetrization_identity() {
        assert!(guided_walk_ring(&RingTarget::uniform(4).unwrap(), &[0.7, 0.3]).is_err());
        let target = RingTarget::new(vec![1.0, 2.0, 3.0, 2.0, 1.0, 0.5]).unwrap();
        let pair = guided_walk_ring(&target, &[0.7, 0.3]).unwrap();
        let lifted = lifted_kernel(&pair, &SwitchingRate::Convex(0.3)).unwrap();
        let collapsed = collapsed_kernel(&pair).unwrap();
        let adj = adjoint(&lifted.kernel, &lifted.mu).unwrap();
        let sym = KernelMatrix::new((lifted.kernel.matrix() + adj.matrix()) * 0.5).unwrap();
        let f = Observable::new(vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.5]).unwrap();
        let mut pf = f.clone();
        let mut sf = lift_observable(&f);
        for _ in 0..30 {
            pf = collapsed.apply(&pf).unwrap();
            sf = sym.apply(&sf).unwrap();
            assert!(sf.max_abs_diff(&lift_observable(&pf)).unwrap() < 1e-9);
        }
    }

    #[test]
    fn neal_two_state_switch() {
        let t2 = KernelMatrix::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let pi = FiniteDistribution::uniform(2).unwrap();
        let pair = neal_pair_kernels(&t2, &pi).unwrap();
        // M1 = Q P1 moves (x1, x2) -> (x1, 1 - x2) deterministically.
        let m1 = pair.swap.left_compose(&pair.p1).unwrap();
        for x1 in 0..2 {
            for x2 in 0..2 {
                assert_eq!(m1.entry(pair_index(2, x1, x2), pair_index(2, x1, 1 - x2)), 1.0);
            }
        }
    }

    #[test]
    fn neal_three_state_structure() {
        let pi = FiniteDistribution::from_unnormalized(vec![1.0, 2.0, 3.0]).unwrap();
        // Metropolis with uniform proposals over all three states, 1/3 each.
        let w = pi.weights();
        let t2 = KernelMatrix::from_rows(
            (0..3)
                .map(|i| {
                    let mut row: Vec<f64> = (0..3).map(|j| if i == j { 0.0 } else { (w[j] / w[i]).min(1.0) / 3.0 }).collect();
                    row[i] = 1.0 - row.iter().sum::<f64>();
                    row
                })
                .collect(),
        )
        .unwrap();
        let pair = neal_pair_kernels(&t2, &pi).unwrap();
        for p in [&pair.p1, &pair.p2] {
            assert!(check_invariance(p, &pair.mu).unwrap());
            assert!(check_muq_reversible(p, &pair.mu, &pair.swap).unwrap());
            let (qp, _) = reversible_parts(p, &pair.swap).unwrap();
            assert!(detailed_balance_residual(&qp, &pair.mu).unwrap() < 1e-12);
        }
        let qp1 = pair.swap.left_compose(&pair.p1).unwrap();
        let qp2 = pair.swap.left_compose(&pair.p2).unwrap();
        for a in 0..9 {
            for b in 0..9 {
                if a != b {
                    assert!(qp1.entry(a, b) >= qp2.entry(a, b) - 1e-15);
                }
            }
        }
        let zero = KernelMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            neal_pair_kernels(&zero, &FiniteDistribution::uniform(2).unwrap()),
            Err(Error::EntryOutOfRange { .. })
        ));
    }

    #[test]
    fn acceptance_rules() {
        AcceptanceRule::Metropolis.validate().unwrap();
        AcceptanceRule::Barker.validate().unwrap();
        let bad = AcceptanceRule::Custom { name: "half".into(), phi: Arc::new(|r: f64| 0.5 * r.min(1.0) + 0.1) };
        assert!(bad.validate().is_err());
        for k in 0..200 {
            let r = 10f64.powf(-4.0 + 0.04 * k as f64);
            let m = AcceptanceRule::Metropolis.phi(r);
            let b = AcceptanceRule::Barker.phi(r);
            assert!(0.5 * m <= b + 1e-15 && b <= m);
            assert_abs_diff_eq!(AcceptanceRule::Barker.phi_log(r.ln()), b, epsilon = 1e-14);
            assert_abs_diff_eq!(AcceptanceRule::Metropolis.phi_log(r.ln()), m, epsilon = 1e-14);
        }
    }

    #[test]
    fn flow_map_validation() {
        let q = velocity_flip(3);
        assert!(matches!(FlowMap::new(vec![0, 0, 1, 2, 3, 4], &q), Err(Error::NotBijection { .. })));
        // A rotation of all six states is a bijection but not time reversible.
        assert!(matches!(
            FlowMap::new(vec![1, 2, 3, 4, 5, 0], &q),
            Err(Error::FlowNotTimeReversible { .. })
        ));
        let psi = FlowMap::ring_shift(3);
        assert_eq!(psi.image(lifted_index(2, 1)), lifted_index(0, 1));
        assert_eq!(psi.iterate(lifted_index(0, -1), 2), lifted_index(1, -1));
    }

    #[test]
    fn metropolized_flow_examples() {
        let target = bump();
        let mu = lift_distribution(target.pi());
        let q = velocity_flip(5);
        let identity_flow = FlowMap::new(q.permutation().to_vec(), &q).unwrap();
        let k = metropolized_flow_finite(&mu, &identity_flow, &q, &AcceptanceRule::Barker).unwrap();
        assert_eq!(k, q.as_kernel());
        let psi = FlowMap::ring_shift(5);
        let metropolis = metropolized_flow_finite(&mu, &psi, &q, &AcceptanceRule::Metropolis).unwrap();
        assert!(max_entry_diff(&metropolis, &gustafson_ring(&target).unwrap().kernel) < 1e-15);
        let barker = metropolized_flow_finite(&mu, &psi, &q, &AcceptanceRule::Barker).unwrap();
        assert!(check_muq_reversible(&barker, &mu, &q).unwrap());
        let (_, pq) = reversible_parts(&barker, &q).unwrap();
        assert!(detailed_balance_residual(&pq, &mu).unwrap() < 1e-15);
        let cert = dirichlet_dominance_certificate(&metropolis, &barker, &mu, &q, Side::Right).unwrap();
        assert!(cert.holds);
    }

    #[test]
    fn extra_chance_examples() {
        let target = bump();
        let mu = lift_distribution(target.pi());
        let q = velocity_flip(5);
        let psi = FlowMap::ring_shift(5);
        let p1 = extra_chance_finite(&mu, &psi, &q, 1).unwrap();
        let flow = metropolized_flow_finite(&mu, &psi, &q, &AcceptanceRule::Metropolis).unwrap();
        assert!(max_entry_diff(&p1, &flow) < 1e-15);
        let flat = lift_distribution(&FiniteDistribution::uniform(5).unwrap());
        let p3 = extra_chance_finite(&flat, &psi, &q, 3).unwrap();
        for z in 0..10 {
            assert_eq!(p3.entry(z, psi.image(z)), 1.0);
        }
        let p2 = extra_chance_finite(&mu, &psi, &q, 2).unwrap();
        for p in [&p1, &p2] {
            assert!(check_muq_reversible(p, &mu, &q).unwrap());
        }
        let mut gen = rng::stream(11, 0);
        for _ in 0..100 {
            let g = Observable::from_fn(10, |_| gen.random::<f64>() - 0.5).unwrap();
            let e1 = dirichlet_form(&g, &p1.compose(&q.as_kernel()).unwrap(), &mu).unwrap();
            let e2 = dirichlet_form(&g, &p2.compose(&q.as_kernel()).unwrap(), &mu).unwrap();
            assert!(e2 >= e1 - 1e-14);
        }
        assert!(extra_chance_finite(&mu, &psi, &q, 0).is_err());
    }

    #[test]
    fn two_cycle_equal_kernels() {
        let target = bump();
        let k = gustafson_ring(&target).unwrap();
        let r = velocity_refresh(5, 0.3).unwrap();
        let f = lift_observable(&Observable::new(vec![1.0, 0.0, -1.0, 2.0, 0.5]).unwrap());
        let report = two_cycle_variance_experiment(&r, &k.kernel, &r, &k.kernel, &k.mu, &k.involution, &f, &[0.3, 0.9]).unwrap();
        assert!(report.holds);
        for (a, b) in report.first.iter().zip(&report.second) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!(report.products.is_some());
    }

    #[test]
    fn random_pairs_are_certified() {
        let mut gen = rng::stream(5, 0);
        for side in [Side::Left, Side::Right] {
            for n in [2, 5, 9] {
                let pair = random_dominated_pair(n, side, &mut gen).unwrap();
                assert!(check_muq_reversible(&pair.p1, &pair.mu, &pair.q).unwrap());
                assert!(check_muq_reversible(&pair.p2, &pair.mu, &pair.q).unwrap());
                let cert = dirichlet_dominance_certificate(&pair.p1, &pair.p2, &pair.mu, &pair.q, side).unwrap();
                assert!(cert.holds, "{cert:?}");
            }
        }
    }
}
