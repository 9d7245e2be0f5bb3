//! Finite-state `(mu, Q)`-reversible analysis.
//!
//! Everything here is dense linear algebra on enumerated state spaces of a
//! few hundred states at most. Observables are column vectors, kernels are
//! row-stochastic matrices acting on observables by `(P f)(z) = sum_z' P(z,z') f(z')`,
//! and inner products are weighted by the reference distribution `mu`.
//!
//! The isometric involution `Q` is always a deterministic state permutation
//! `xi` with `xi o xi = id`, acting by `(Q f)(z) = f(xi(z))`. For such a point
//! map the `L^2(mu)` isometry `<Qf, Qg>_mu = <f, g>_mu` holds for every pair
//! of observables iff `mu(xi(z)) = mu(z)` for every state, which is what
//! [`check_isometric_involution`] tests.
//!
//! Discounted variances `var_lambda` are only defined for `lambda < 1`. Whether
//! they converge to the undiscounted asymptotic variance as `lambda -> 1` is
//! chain-specific and is not decided here.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Row sums and probability normalization.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Invariance, adjointness and detailed-balance checks.
pub const STRUCTURAL_TOL: f64 = 1e-10;
/// Cross-checks between a linear solve and a truncated series.
pub const SOLVE_TOL: f64 = 1e-8;
/// Minimum eigenvalue accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;
/// Largest tolerated violation of a variance ordering.
pub const ORDERING_TOL: f64 = 1e-9;

/// Strictly positive probability vector over an enumerated state space.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution {
    weights: DVector<f64>,
}

impl FiniteDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        validate_weights(&weights)?;
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self {
            weights: DVector::from_vec(weights),
        })
    }

    /// Normalizes positive weights to sum to one.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        validate_weights(&weights)?;
        let sum: f64 = weights.iter().sum();
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("empty state space".into()));
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        self.weights.as_slice()
    }

    pub fn weight(&self, state: usize) -> f64 {
        self.weights[state]
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn expectation(&self, f: &Observable) -> Result<f64> {
        check_dim(self.len(), f.len())?;
        Ok(self.weights.dot(&f.values))
    }

    /// `<f, g>_mu`.
    pub fn inner(&self, f: &Observable, g: &Observable) -> Result<f64> {
        check_dim(self.len(), f.len())?;
        check_dim(self.len(), g.len())?;
        Ok(self.weighted_dot(&f.values, &g.values))
    }

    pub fn norm_sq(&self, f: &Observable) -> Result<f64> {
        self.inner(f, f)
    }

    /// `f - mu(f)`.
    pub fn center(&self, f: &Observable) -> Result<Observable> {
        let mean = self.expectation(f)?;
        Ok(Observable {
            values: f.values.add_scalar(-mean),
        })
    }

    /// `||f - mu(f)||^2_mu`.
    pub fn variance(&self, f: &Observable) -> Result<f64> {
        let centered = self.center(f)?;
        self.norm_sq(&centered)
    }

    fn weighted_dot(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b.iter()))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidParameter("empty state space".into()));
    }
    for (index, &value) in weights.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if value <= 0.0 {
            return Err(Error::NonPositiveWeight { index, value });
        }
    }
    Ok(())
}

/// Row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    m: DMatrix<f64>,
}

impl KernelMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidParameter("empty kernel".into()));
        }
        for row in 0..m.nrows() {
            let mut sum = 0.0;
            for col in 0..m.ncols() {
                let value = m[(row, col)];
                if !value.is_finite() {
                    return Err(Error::NonFinite {
                        index: row * m.ncols() + col,
                    });
                }
                if !(-STOCHASTIC_TOL..=1.0 + STOCHASTIC_TOL).contains(&value) {
                    return Err(Error::EntryOutOfRange { row, col, value });
                }
                sum += value;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::RowSum { row, sum });
            }
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        for row in &rows {
            check_dim(n, row.len())?;
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
        }
    }

    /// Every row equal to `mu`: the independent sampler.
    pub fn independent(mu: &FiniteDistribution) -> Self {
        let n = mu.len();
        Self {
            m: DMatrix::from_fn(n, n, |_, j| mu.weight(j)),
        }
    }

    /// Deterministic move `z -> map[z]`.
    pub fn from_map(map: &[usize]) -> Result<Self> {
        let n = map.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &j) in map.iter().enumerate() {
            if j >= n {
                return Err(Error::DimensionMismatch { expected: n, found: j + 1 });
            }
            m[(i, j)] = 1.0;
        }
        Ok(Self { m })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn entry(&self, from: usize, to: usize) -> f64 {
        self.m[(from, to)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// Operator composition `self * other`: first a step of `self`, then `other`.
    pub fn compose(&self, other: &KernelMatrix) -> Result<KernelMatrix> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self {
            m: &self.m * &other.m,
        })
    }

    /// `(P f)(z) = sum_z' P(z, z') f(z')`.
    pub fn apply(&self, f: &Observable) -> Result<Observable> {
        check_dim(self.dim(), f.len())?;
        Ok(Observable {
            values: &self.m * &f.values,
        })
    }

    /// `beta * self + (1 - beta) * other`.
    pub fn mixture(&self, beta: f64, other: &KernelMatrix) -> Result<KernelMatrix> {
        check_dim(self.dim(), other.dim())?;
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!("mixture weight {beta}")));
        }
        Self::new(&self.m * beta + &other.m * (1.0 - beta))
    }

    /// Plain-text form: `n` on the first line, then `n` rows of `n` decimal entries.
    pub fn to_text(&self) -> String {
        let n = self.dim();
        let mut out = format!("{n}\n");
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{}", self.m[(i, j)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing dimension line".into()))?;
        let n: usize = header
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("dimension: {e}")))?;
        let mut rows = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {i}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != n {
                return Err(Error::Parse(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            rows.push(row);
        }
        if rows.len() != n {
            return Err(Error::Parse(format!("{} rows, expected {n}", rows.len())));
        }
        Self::from_rows(rows)
    }
}

/// Self-inverse state permutation `xi` and its composition operator `Q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicInvolution {
    perm: Vec<usize>,
}

impl DeterministicInvolution {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        for (state, &image) in perm.iter().enumerate() {
            if image >= n || perm[image] != state {
                return Err(Error::NotInvolution { state });
            }
        }
        Ok(Self { perm })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn image(&self, state: usize) -> usize {
        self.perm[state]
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// `(Q f)(z) = f(xi(z))`.
    pub fn apply(&self, f: &Observable) -> Result<Observable> {
        check_dim(self.len(), f.len())?;
        Ok(Observable {
            values: DVector::from_fn(self.len(), |z, _| f.values[self.perm[z]]),
        })
    }

    pub fn as_kernel(&self) -> KernelMatrix {
        KernelMatrix::from_map(&self.perm).expect("involution images are in range")
    }

    /// `Q P Q`, entrywise `P(xi(z), xi(z'))`.
    pub fn conjugate(&self, p: &KernelMatrix) -> Result<KernelMatrix> {
        check_dim(self.len(), p.dim())?;
        let n = self.len();
        Ok(KernelMatrix {
            m: DMatrix::from_fn(n, n, |i, j| p.m[(self.perm[i], self.perm[j])]),
        })
    }

    /// `Q P`, entrywise `P(xi(z), z')`.
    pub fn left_compose(&self, p: &KernelMatrix) -> Result<KernelMatrix> {
        check_dim(self.len(), p.dim())?;
        let n = self.len();
        Ok(KernelMatrix {
            m: DMatrix::from_fn(n, n, |i, j| p.m[(self.perm[i], j)]),
        })
    }

    /// `P Q`, entrywise `P(z, xi(z'))`.
    pub fn right_compose(&self, p: &KernelMatrix) -> Result<KernelMatrix> {
        check_dim(self.len(), p.dim())?;
        let n = self.len();
        Ok(KernelMatrix {
            m: DMatrix::from_fn(n, n, |i, j| p.m[(i, self.perm[j])]),
        })
    }
}

/// Real function on the enumerated states.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    values: DVector<f64>,
}

impl Observable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            values: DVector::from_vec(values),
        })
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            values: DVector::from_element(n, value),
        }
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> f64) -> Result<Self> {
        Self::new((0..n).map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn add(&self, other: &Observable) -> Result<Observable> {
        check_dim(self.len(), other.len())?;
        Ok(Observable {
            values: &self.values + &other.values,
        })
    }

    pub fn sub(&self, other: &Observable) -> Result<Observable> {
        check_dim(self.len(), other.len())?;
        Ok(Observable {
            values: &self.values - &other.values,
        })
    }

    pub fn scale(&self, factor: f64) -> Observable {
        Observable {
            values: &self.values * factor,
        }
    }

    pub fn max_abs_diff(&self, other: &Observable) -> Result<f64> {
        check_dim(self.len(), other.len())?;
        Ok(self.values.iter().zip(other.values.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

impl From<DVector<f64>> for Observable {
    fn from(values: DVector<f64>) -> Self {
        Self { values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

/// Which reversible part a Dirichlet dominance is stated for: `Q P` or `P Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Result of a positive-semidefiniteness test of a symmetrized quadratic-form difference.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingCertificate {
    pub dominance_matrix_min_eig: f64,
    pub holds: bool,
    /// Observable attaining the minimum eigenvalue when the test fails.
    pub witness: Option<Observable>,
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

fn invariance_residual(p: &KernelMatrix, mu: &FiniteDistribution) -> Result<f64> {
    check_dim(mu.len(), p.dim())?;
    let pushed = p.m.tr_mul(&mu.weights);
    Ok(pushed
        .iter()
        .zip(mu.weights.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

fn require_invariant(p: &KernelMatrix, mu: &FiniteDistribution) -> Result<()> {
    let residual = invariance_residual(p, mu)?;
    if residual > STRUCTURAL_TOL {
        Err(Error::NotInvariant { residual })
    } else {
        Ok(())
    }
}

/// True iff `mu^T P = mu^T` componentwise within [`STRUCTURAL_TOL`].
pub fn check_invariance(p: &KernelMatrix, mu: &FiniteDistribution) -> Result<bool> {
    Ok(invariance_residual(p, mu)? <= STRUCTURAL_TOL)
}

/// True iff `xi` is self-inverse and `mu(xi(z)) = mu(z)` for every state
/// (relative tolerance [`STRUCTURAL_TOL`]). For a point map this is
/// equivalent to `<Qf, Qg>_mu = <f, g>_mu` for all observables.
pub fn check_isometric_involution(q: &DeterministicInvolution, mu: &FiniteDistribution) -> Result<bool> {
    check_dim(mu.len(), q.len())?;
    Ok((0..q.len()).all(|z| {
        let image = q.image(z);
        let (a, b) = (mu.weight(z), mu.weight(image));
        q.image(image) == z && (a - b).abs() <= STRUCTURAL_TOL * a.max(b)
    }))
}

/// `mu`-adjoint `P*(z, z') = mu(z') P(z', z) / mu(z)`.
pub fn adjoint(p: &KernelMatrix, mu: &FiniteDistribution) -> Result<KernelMatrix> {
    require_invariant(p, mu)?;
    let n = p.dim();
    let w = &mu.weights;
    let m = DMatrix::from_fn(n, n, |i, j| w[j] * p.m[(j, i)] / w[i]);
    KernelMatrix::new(m).map_err(|e| match e {
        Error::RowSum { sum, .. } => Error::NotInvariant {
            residual: (sum - 1.0).abs(),
        },
        other => other,
    })
}

fn max_abs_entry_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// True iff `adjoint(P, mu) = Q P Q` entrywise within [`STRUCTURAL_TOL`].
pub fn check_muq_reversible(
    p: &KernelMatrix,
    mu: &FiniteDistribution,
    q: &DeterministicInvolution,
) -> Result<bool> {
    check_dim(mu.len(), p.dim())?;
    if !check_isometric_involution(q, mu)? {
        let state = (0..q.len())
            .find(|&z| (mu.weight(z) - mu.weight(q.image(z))).abs() > 0.0)
            .unwrap_or(0);
        return Err(Error::InvolutionNotIsometric { state });
    }
    if !check_invariance(p, mu)? {
        return Ok(false);
    }
    let adj = adjoint(p, mu)?;
    let qpq = q.conjugate(p)?;
    Ok(max_abs_entry_diff(&adj.m, &qpq.m) <= STRUCTURAL_TOL)
}

/// Ordinary `mu`-reversibility (`Q = Id`).
pub fn check_reversible(p: &KernelMatrix, mu: &FiniteDistribution) -> Result<bool> {
    check_muq_reversible(p, mu, &DeterministicInvolution::identity(mu.len()))
}

/// Largest detailed-balance flow asymmetry `|mu(z) P(z,z') - mu(z') P(z',z)|`.
pub fn detailed_balance_residual(p: &KernelMatrix, mu: &FiniteDistribution) -> Result<f64> {
    check_dim(mu.len(), p.dim())?;
    let n = p.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let flow = mu.weight(i) * p.m[(i, j)] - mu.weight(j) * p.m[(j, i)];
            worst = worst.max(flow.abs());
        }
    }
    Ok(worst)
}

/// The reversible parts `(Q P, P Q)`.
pub fn reversible_parts(
    p: &KernelMatrix,
    q: &DeterministicInvolution,
) -> Result<(KernelMatrix, KernelMatrix)> {
    Ok((q.left_compose(p)?, q.right_compose(p)?))
}

/// `(f + Q f) / 2` for [`Sign::Plus`], `(f - Q f) / 2` for [`Sign::Minus`].
pub fn project_symmetric(f: &Observable, q: &DeterministicInvolution, sign: Sign) -> Result<Observable> {
    let qf = q.apply(f)?;
    let combined = match sign {
        Sign::Plus => f.add(&qf)?,
        Sign::Minus => f.sub(&qf)?,
    };
    Ok(combined.scale(0.5))
}

/// `E(f, P) = <f, (Id - P) f>_mu`.
pub fn dirichlet_form(f: &Observable, p: &KernelMatrix, mu: &FiniteDistribution) -> Result<f64> {
    let pf = p.apply(f)?;
    Ok(mu.norm_sq(f)? - mu.inner(f, &pf)?)
}

/// `1/2 sum mu(z) P(z,z') (f(z') - f(z))^2`. Agrees with [`dirichlet_form`]
/// whenever `mu` is invariant for `P`, which is checked.
pub fn dirichlet_form_squared_jumps(
    f: &Observable,
    p: &KernelMatrix,
    mu: &FiniteDistribution,
) -> Result<f64> {
    check_dim(p.dim(), f.len())?;
    require_invariant(p, mu)?;
    let n = p.dim();
    let v = f.values();
    let mut total = 0.0;
    for i in 0..n {
        let row: f64 = (0..n).map(|j| p.m[(i, j)] * (v[j] - v[i]).powi(2)).sum();
        total += mu.weight(i) * row;
    }
    Ok(0.5 * total)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && (0.0..1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::InvalidLambda { lambda })
    }
}

fn solve(a: DMatrix<f64>, rhs: DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.lu().solve(&rhs).ok_or(Error::Singular)
}

/// `var_lambda` for every column of `fs` (already centered).
fn var_lambda_columns(
    centered: &DMatrix<f64>,
    p: &KernelMatrix,
    mu: &FiniteDistribution,
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = p.dim();
    let system = DMatrix::identity(n, n) - &p.m * lambda;
    let g = solve(system, centered.clone())?;
    Ok((0..centered.ncols())
        .map(|c| {
            let f = centered.column(c);
            let mut cross = 0.0;
            let mut norm = 0.0;
            for z in 0..n {
                cross += mu.weight(z) * f[z] * g[(z, c)];
                norm += mu.weight(z) * f[z] * f[z];
            }
            2.0 * cross - norm
        })
        .collect())
}

/// `var_lambda(f, P) = 2 <f_bar, (Id - lambda P)^{-1} f_bar>_mu - ||f_bar||^2_mu`
/// by a dense LU solve.
pub fn var_lambda(f: &Observable, p: &KernelMatrix, mu: &FiniteDistribution, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_dim(p.dim(), f.len())?;
    require_invariant(p, mu)?;
    let centered = mu.center(f)?;
    let column = DMatrix::from_column_slice(f.len(), 1, centered.values());
    Ok(var_lambda_columns(&column, p, mu, lambda)?[0])
}

/// Discounted variance of the chain alternating `P1, P2, P1, ...` started at `mu`.
///
/// Evaluated in closed form through solves with `Id - lambda^2 P1 P2` and
/// `Id - lambda^2 P2 P1`. Symmetric in the two kernels.
pub fn var_lambda_cycle(
    f: &Observable,
    p1: &KernelMatrix,
    p2: &KernelMatrix,
    mu: &FiniteDistribution,
    lambda: f64,
) -> Result<f64> {
    check_lambda(lambda)?;
    check_dim(p1.dim(), f.len())?;
    check_dim(p2.dim(), f.len())?;
    require_invariant(p1, mu)?;
    require_invariant(p2, mu)?;
    let n = f.len();
    let fbar = mu.center(f)?;
    let fv = fbar.as_vector();
    let l2 = lambda * lambda;
    let half = |a: &KernelMatrix, b: &KernelMatrix| -> Result<f64> {
        let system = DMatrix::identity(n, n) - (&a.m * &b.m) * l2;
        let rhs = fv + (&a.m * fv) * lambda;
        let g = solve(system, DMatrix::from_column_slice(n, 1, rhs.as_slice()))?;
        Ok(mu.weighted_dot(fv, &g.column(0).into_owned()))
    };
    Ok(half(p1, p2)? + half(p2, p1)? - mu.norm_sq(&fbar)?)
}

/// `Gap_R(P) = inf E(f, P) / ||f||^2_mu` over nonzero centered `f`, for a
/// `mu`-reversible kernel.
pub fn spectral_gap_reversible(p: &KernelMatrix, mu: &FiniteDistribution) -> Result<f64> {
    if mu.len() < 2 {
        return Err(Error::InvalidParameter("spectral gap needs at least two states".into()));
    }
    if !check_reversible(p, mu)? {
        return Err(Error::NotReversible);
    }
    let sym = symmetrize(&p.m, mu);
    let root = mu.weights.map(f64::sqrt);
    // Send the constant direction to an eigenvalue below the spectrum [-1, 1].
    let deflated = sym - (&root * root.transpose()) * 3.0;
    let eig = SymmetricEigen::new(deflated);
    let top = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(1.0 - top)
}

/// Symmetric part of `D^{1/2} S D^{-1/2}`, whose quadratic form in
/// `h = D^{1/2} g` equals `<g, S g>_mu`.
fn symmetrize(s: &DMatrix<f64>, mu: &FiniteDistribution) -> DMatrix<f64> {
    let n = s.nrows();
    let root = mu.weights.map(f64::sqrt);
    let m = DMatrix::from_fn(n, n, |i, j| root[i] * s[(i, j)] / root[j]);
    (&m + m.transpose()) * 0.5
}

/// Minimum of `<g, S g>_mu / ||g||^2_mu` and an observable attaining it.
pub fn mu_quadratic_form_min(s: &DMatrix<f64>, mu: &FiniteDistribution) -> Result<(f64, Observable)> {
    check_dim(mu.len(), s.nrows())?;
    check_dim(mu.len(), s.ncols())?;
    let eig = SymmetricEigen::new(symmetrize(s, mu));
    let (idx, &min) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::InvalidParameter("empty matrix".into()))?;
    let h = eig.eigenvectors.column(idx);
    let witness = DVector::from_fn(mu.len(), |z, _| h[z] / mu.weight(z).sqrt());
    Ok((min, Observable::from(witness)))
}

fn certificate_from(s: &DMatrix<f64>, mu: &FiniteDistribution) -> Result<OrderingCertificate> {
    let (min, witness) = mu_quadratic_form_min(s, mu)?;
    let holds = min >= -PSD_TOL;
    Ok(OrderingCertificate {
        dominance_matrix_min_eig: min,
        holds,
        witness: (!holds).then_some(witness),
    })
}

/// Tests `E(g, Q P1) >= E(g, Q P2)` (left) or `E(g, P1 Q) >= E(g, P2 Q)`
/// (right) for every observable `g`, as positive semidefiniteness of the
/// `mu`-symmetrized difference.
pub fn dirichlet_dominance_certificate(
    p1: &KernelMatrix,
    p2: &KernelMatrix,
    mu: &FiniteDistribution,
    q: &DeterministicInvolution,
    side: Side,
) -> Result<OrderingCertificate> {
    if !check_muq_reversible(p1, mu, q)? || !check_muq_reversible(p2, mu, q)? {
        return Err(Error::NotMuQReversible);
    }
    let (a, b) = match side {
        Side::Left => (q.left_compose(p2)?, q.left_compose(p1)?),
        Side::Right => (q.right_compose(p2)?, q.right_compose(p1)?),
    };
    certificate_from(&(a.m - b.m), mu)
}

/// Outcome of checking a discounted-variance ordering over random symmetric
/// and antisymmetric observables.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingReport {
    pub lambdas: Vec<f64>,
    pub trials: usize,
    /// `max(0, var(f, P1) - var(f, P2))` over `Qf = f` observables.
    pub max_violation_plus: f64,
    /// `max(0, var(f, P2) - var(f, P1))` over `Qf = -f` observables.
    pub max_violation_minus: f64,
    /// Largest observed `var(f, P2) - var(f, P1)` over `Qf = f` observables.
    pub max_margin_plus: f64,
    pub holds: bool,
}

impl OrderingReport {
    pub fn max_violation(&self) -> f64 {
        self.max_violation_plus.max(self.max_violation_minus)
    }
}

/// True iff the Dirichlet dominance of `P1` over `P2` is certified on either side.
pub fn dominance_certified(
    p1: &KernelMatrix,
    p2: &KernelMatrix,
    mu: &FiniteDistribution,
    q: &DeterministicInvolution,
) -> Result<bool> {
    Ok(dirichlet_dominance_certificate(p1, p2, mu, q, Side::Left)?.holds
        || dirichlet_dominance_certificate(p1, p2, mu, q, Side::Right)?.holds)
}

/// Checks `var(f, P1) <= var(f, P2)` for `Qf = f` and the reverse for
/// `Qf = -f`, on `trials` seeded Gaussian observables projected by
/// `(Id +- Q)/2` and every discount factor in `lambdas`.
pub fn verify_ordering_theorem(
    p1: &KernelMatrix,
    p2: &KernelMatrix,
    mu: &FiniteDistribution,
    q: &DeterministicInvolution,
    lambdas: &[f64],
    trials: usize,
    seed: u64,
) -> Result<OrderingReport> {
    for &lambda in lambdas {
        check_lambda(lambda)?;
    }
    if !dominance_certified(p1, p2, mu, q)? {
        return Err(Error::HypothesisNotCertified(
            "Dirichlet forms of the reversible parts are not ordered".into(),
        ));
    }
    let n = mu.len();
    let mut gen = rng::stream(seed, 0);
    let raw = DMatrix::from_fn(n, trials, |_, _| gen.sample::<f64, _>(StandardNormal));
    let project = |sign: Sign| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n, trials);
        for c in 0..trials {
            for z in 0..n {
                let qz = raw[(q.image(z), c)];
                out[(z, c)] = match sign {
                    Sign::Plus => 0.5 * (raw[(z, c)] + qz),
                    Sign::Minus => 0.5 * (raw[(z, c)] - qz),
                };
            }
            let mean: f64 = (0..n).map(|z| mu.weight(z) * out[(z, c)]).sum();
            for z in 0..n {
                out[(z, c)] -= mean;
            }
        }
        out
    };
    let plus = project(Sign::Plus);
    let minus = project(Sign::Minus);

    let mut report = OrderingReport {
        lambdas: lambdas.to_vec(),
        trials,
        max_violation_plus: 0.0,
        max_violation_minus: 0.0,
        max_margin_plus: 0.0,
        holds: true,
    };
    for &lambda in lambdas {
        let v1 = var_lambda_columns(&plus, p1, mu, lambda)?;
        let v2 = var_lambda_columns(&plus, p2, mu, lambda)?;
        for (a, b) in v1.iter().zip(&v2) {
            report.max_violation_plus = report.max_violation_plus.max(a - b);
            report.max_margin_plus = report.max_margin_plus.max(b - a);
        }
        let w1 = var_lambda_columns(&minus, p1, mu, lambda)?;
        let w2 = var_lambda_columns(&minus, p2, mu, lambda)?;
        for (a, b) in w1.iter().zip(&w2) {
            report.max_violation_minus = report.max_violation_minus.max(b - a);
        }
    }
    report.holds = report.max_violation() <= ORDERING_TOL;
    Ok(report)
}

/// Both sides of the relaxed ordering implied by
/// `E(g, Q P1) >= alpha^{-1} E(g, Q P2)` for all `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantitativeBound {
    /// `var_{lambda'}(f, P1) + ||f_bar||^2`.
    pub lhs: f64,
    /// `(1 - lambda + alpha lambda) (var_lambda(f, P2) + ||f_bar||^2)`.
    pub rhs: f64,
    /// `lambda' = alpha lambda / (1 - lambda + alpha lambda)`.
    pub effective_lambda: f64,
    pub holds: bool,
}

/// Relaxed ordering for a pair whose Dirichlet forms are ordered only up to a
/// factor `alpha`.
///
/// The lazy kernel `(1 - alpha) Id + alpha P1` has Dirichlet forms dominating
/// those of `P2`, and its resolvent at `lambda` is a rescaled resolvent of
/// `P1` at `lambda' = alpha lambda / (1 - lambda + alpha lambda)`. The check is
/// therefore
///
/// ```text
/// var_{lambda'}(f, P1) + ||f_bar||^2 <= (1 - lambda + alpha lambda) (var_lambda(f, P2) + ||f_bar||^2)
/// ```
///
/// which is exact for every `lambda < 1` and gives
/// `var(f, P1) <= alpha var(f, P2) - (1 - alpha) ||f_bar||^2` as `lambda -> 1`.
#[allow(clippy::too_many_arguments)]
pub fn verify_quantitative_remark(
    p1: &KernelMatrix,
    p2: &KernelMatrix,
    mu: &FiniteDistribution,
    q: &DeterministicInvolution,
    alpha: f64,
    f: &Observable,
    lambda: f64,
) -> Result<QuantitativeBound> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside (0, 1]")));
    }
    check_lambda(lambda)?;
    if !check_muq_reversible(p1, mu, q)? || !check_muq_reversible(p2, mu, q)? {
        return Err(Error::NotMuQReversible);
    }
    if q.apply(f)?.max_abs_diff(f)? > STRUCTURAL_TOL {
        return Err(Error::InvalidParameter("observable is not Q-symmetric".into()));
    }
    // alpha (Id - Q P1) - (Id - Q P2) must be positive semidefinite.
    let n = mu.len();
    let id = DMatrix::<f64>::identity(n, n);
    let s = (&id - q.left_compose(p1)?.m) * alpha - (&id - q.left_compose(p2)?.m);
    let (min, _) = mu_quadratic_form_min(&s, mu)?;
    if min < -PSD_TOL {
        return Err(Error::HypothesisNotCertified(format!(
            "relaxed Dirichlet dominance fails (min eigenvalue {min:e})"
        )));
    }
    let scale = 1.0 - lambda + alpha * lambda;
    let effective_lambda = alpha * lambda / scale;
    let norm = mu.variance(f)?;
    let lhs = var_lambda(f, p1, mu, effective_lambda)? + norm;
    let rhs = scale * (var_lambda(f, p2, mu, lambda)? + norm);
    Ok(QuantitativeBound {
        lhs,
        rhs,
        effective_lambda,
        holds: lhs <= rhs + ORDERING_TOL,
    })
}
