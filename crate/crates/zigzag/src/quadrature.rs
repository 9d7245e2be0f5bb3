//! Quadrature over `mu = pi ⊗ Uniform{-1, 1}^d`: Gauss–Hermite for diagonal
//! Gaussian targets, trapezoid on a box otherwise, exact sums over velocities.
//! Every result is computed at two resolutions and rejected if they disagree.

use nalgebra::{DMatrix, SymmetricEigen};
use nonrev_core::potential::Potential;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::PhaseFunction;
use crate::generator::{apply_update, generator_apply, velocities};
use crate::intensity::{channel_rates, IntensitySpec};

/// Dimension limit for tensor quadrature.
pub const MAX_QUADRATURE_DIM: usize = 8;
/// Relative disagreement tolerated between the two resolutions.
pub const RICHARDSON_RTOL: f64 = 1e-4;
/// Absolute floor for the resolution check.
pub const RICHARDSON_ATOL: f64 = 1e-12;
const MAX_POINTS: usize = 4_000_000;

/// Nodes and weights of the Gauss rule for the Jacobi matrix with diagonal
/// `diag` and off-diagonal `off`, for a weight of total mass `mu0`.
pub fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut j = DMatrix::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
        if i + 1 < n {
            j[(i, i + 1)] = off[i];
            j[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], mu0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Gauss–Hermite rule for `N(0, 1)`: weights sum to one.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    let off: Vec<f64> = (1..order).map(|k| (k as f64).sqrt()).collect();
    golub_welsch(&vec![0.0; order], &off, 1.0)
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let off: Vec<f64> = (1..order)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&vec![0.0; order], &off, 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Grid {
    /// Per-coordinate Gauss–Hermite of the given order; Gaussian targets only.
    GaussHermite { order: usize },
    /// Trapezoid on `[lo, hi]^d` with `points` nodes per coordinate, weighted by `exp(-U)`.
    Trapezoid { lo: f64, hi: f64, points: usize },
}

impl Grid {
    /// The finer resolution used for the consistency check.
    pub fn refined(&self) -> Grid {
        match *self {
            Grid::GaussHermite { order } => Grid::GaussHermite { order: 2 * order },
            Grid::Trapezoid { lo, hi, points } => Grid::Trapezoid { lo, hi, points: 2 * points - 1 },
        }
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid::GaussHermite { order: 40 }
    }
}

/// Tensor rule over positions, normalized to the target `pi`.
#[derive(Debug, Clone)]
pub struct PositionRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl PositionRule {
    pub fn new(pot: &dyn Potential, grid: &Grid) -> Result<Self> {
        let d = pot.dim();
        if d > MAX_QUADRATURE_DIM {
            return Err(Error::DimensionTooLarge { found: d, limit: MAX_QUADRATURE_DIM });
        }
        let axes: Vec<(Vec<f64>, Vec<f64>)> = match *grid {
            Grid::GaussHermite { order } => {
                if order < 2 {
                    return Err(Error::InvalidParameter("Gauss–Hermite order must be at least 2".into()));
                }
                let variances = pot.gaussian_variances().ok_or_else(|| {
                    Error::InvalidParameter("Gauss–Hermite quadrature needs a diagonal Gaussian target".into())
                })?;
                let (z, w) = gauss_hermite(order);
                variances
                    .iter()
                    .map(|s2| (z.iter().map(|zi| zi * s2.sqrt()).collect(), w.clone()))
                    .collect()
            }
            Grid::Trapezoid { lo, hi, points } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) || points < 3 {
                    return Err(Error::InvalidParameter(format!("trapezoid grid [{lo}, {hi}] with {points} points")));
                }
                let h = (hi - lo) / (points - 1) as f64;
                let nodes: Vec<f64> = (0..points).map(|k| lo + h * k as f64).collect();
                let weights = (0..points).map(|k| if k == 0 || k + 1 == points { 0.5 * h } else { h }).collect();
                vec![(nodes, weights); d]
            }
        };
        let total: usize = axes.iter().map(|a| a.0.len()).product();
        if total > MAX_POINTS {
            return Err(Error::InvalidParameter(format!("{total} quadrature points exceed {MAX_POINTS}")));
        }
        let mut points = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut index = vec![0usize; d];
        for _ in 0..total {
            let x: Vec<f64> = (0..d).map(|j| axes[j].0[index[j]]).collect();
            let mut w: f64 = (0..d).map(|j| axes[j].1[index[j]]).product();
            if matches!(grid, Grid::Trapezoid { .. }) {
                w *= (-pot.value(&x)).exp();
            }
            points.push(x);
            weights.push(w);
            for j in 0..d {
                index[j] += 1;
                if index[j] < axes[j].0.len() {
                    break;
                }
                index[j] = 0;
            }
        }
        let norm: f64 = weights.iter().sum();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidParameter("quadrature weights do not normalize".into()));
        }
        weights.iter_mut().for_each(|w| *w /= norm);
        Ok(Self { points, weights })
    }

    /// `∫ h dmu` with `v` uniform on `{-1, 1}^d`.
    pub fn mu_expectation(&self, h: impl FnMut(&[f64], &[f64]) -> Result<f64>) -> Result<f64> {
        Ok(self.mu_expectation_and_magnitude(h)?.0)
    }

    /// `(∫ h dmu, ∫ |h| dmu)`.
    pub fn mu_expectation_and_magnitude(
        &self,
        mut h: impl FnMut(&[f64], &[f64]) -> Result<f64>,
    ) -> Result<(f64, f64)> {
        let d = self.points.first().map_or(0, Vec::len);
        let vs = velocities(d)?;
        let (mut total, mut magnitude) = (0.0, 0.0);
        for (x, w) in self.points.iter().zip(&self.weights) {
            for v in &vs {
                let value = h(x, v)?;
                total += w * value / vs.len() as f64;
                magnitude += w * value.abs() / vs.len() as f64;
            }
        }
        Ok((total, magnitude))
    }
}

/// Values at the coarse and fine resolutions, and `∫ |integrand| dmu` at the fine one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resolved {
    pub coarse: f64,
    pub fine: f64,
    pub magnitude: f64,
}

/// Evaluates `∫ h dmu` at both resolutions. The disagreement is measured
/// against `∫ |h| dmu`, so that quantities which vanish in exact arithmetic
/// are still checked on a meaningful scale.
fn resolve(
    pot: &dyn Potential,
    grid: &Grid,
    h: impl Fn(&[f64], &[f64]) -> Result<f64>,
) -> Result<Resolved> {
    let (coarse, _) = PositionRule::new(pot, grid)?.mu_expectation_and_magnitude(&h)?;
    let (fine, magnitude) = PositionRule::new(pot, &grid.refined())?.mu_expectation_and_magnitude(&h)?;
    if !fine.is_finite() || (fine - coarse).abs() > RICHARDSON_RTOL * magnitude + RICHARDSON_ATOL {
        return Err(Error::GridTooCoarse { coarse, fine });
    }
    Ok(Resolved { coarse, fine, magnitude })
}

/// `∫ Lg dmu`, which vanishes when `mu` is invariant.
pub fn stationarity_residual(pot: &dyn Potential, spec: &IntensitySpec, g: &PhaseFunction, grid: &Grid) -> Result<f64> {
    spec.validate()?;
    spec.check_dim(pot.dim())?;
    Ok(resolve(pot, grid, |x, v| generator_apply(pot, spec, g, x, v))?.fine)
}

/// `<g, -(L1 - L2) Q g>_mu` evaluated two ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirichletGap {
    /// Through the two generators applied to `Qg`.
    pub direct: Resolved,
    /// `sum_k <g, dl_k [Id - R_k Q] g> - <g, dl [Id - Q] g>` with `dl_k = lambda_{1,k} - lambda_{2,k}`
    /// and `dl` the difference of total rates.
    pub decomposed: Resolved,
}

pub fn dirichlet_gap_terms(
    pot: &dyn Potential,
    spec1: &IntensitySpec,
    spec2: &IntensitySpec,
    g: &PhaseFunction,
    grid: &Grid,
) -> Result<DirichletGap> {
    let d = pot.dim();
    if !(1..=2).contains(&d) {
        return Err(Error::InvalidParameter(format!("Dirichlet gap quadrature supports d in {{1, 2}}, got {d}")));
    }
    for spec in [spec1, spec2] {
        spec.validate()?;
        spec.check_dim(d)?;
    }
    let qg = g.flipped();
    let direct = resolve(pot, grid, |x, v| {
        let l1 = generator_apply(pot, spec1, &qg, x, v)?;
        let l2 = generator_apply(pot, spec2, &qg, x, v)?;
        Ok(-g.value(x, v) * (l1 - l2))
    })?;
    let decomposed = resolve(pot, grid, |x, v| {
        let here = g.value(x, v);
        let r1 = channel_rates(spec1, pot, x, v);
        let r2 = channel_rates(spec2, pot, x, v);
        let mut total_diff = 0.0;
        let mut sum = 0.0;
        for ((update, a), (_, b)) in r1.into_iter().zip(r2) {
            let diff = a - b;
            total_diff += diff;
            if diff != 0.0 {
                // (R_k Q g)(x, v) = (R_k (Qg))(x, v).
                sum += diff * (here - apply_update(update, &qg, x, v)?);
            }
        }
        let q_term = total_diff * (here - qg.value(x, v));
        Ok(here * (sum - q_term))
    })?;
    Ok(DirichletGap { direct, decomposed })
}

/// `<g, -(L1 - L2) Q g>_mu` at the fine resolution.
pub fn dirichlet_gap_quadrature(
    pot: &dyn Potential,
    spec1: &IntensitySpec,
    spec2: &IntensitySpec,
    g: &PhaseFunction,
    grid: &Grid,
) -> Result<f64> {
    Ok(dirichlet_gap_terms(pot, spec1, spec2, g, grid)?.direct.fine)
}
