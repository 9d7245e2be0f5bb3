//! Observables `g(x, v)` on phase space.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// `coef * prod x_j^{x_pow[j]} * prod v_j^{v_pow[j]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub x_pow: Vec<u32>,
    pub v_pow: Vec<u32>,
}

impl Monomial {
    fn velocity_factor(&self, v: &[f64]) -> f64 {
        self.v_pow
            .iter()
            .zip(v)
            .map(|(&p, &vj)| if p % 2 == 1 { vj } else { 1.0 })
            .product()
    }

    fn value(&self, x: &[f64], v: &[f64]) -> f64 {
        let xs: f64 = self.x_pow.iter().zip(x).map(|(&p, &xj)| xj.powi(p as i32)).product();
        self.coef * xs * self.velocity_factor(v)
    }

    fn degree(&self) -> u32 {
        self.x_pow.iter().sum()
    }
}

/// Polynomial in `x` with velocity-dependent coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(dim: usize, terms: Vec<Monomial>) -> Result<Self> {
        for t in &terms {
            if t.x_pow.len() != dim || t.v_pow.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: t.x_pow.len().max(t.v_pow.len()) });
            }
            if !t.coef.is_finite() {
                return Err(Error::InvalidParameter("non-finite coefficient".into()));
            }
        }
        Ok(Self { dim, terms })
    }

    /// `x_i^power`.
    pub fn coordinate_power(dim: usize, i: usize, power: u32) -> Self {
        let mut x_pow = vec![0; dim];
        x_pow[i] = power;
        Self { dim, terms: vec![Monomial { coef: 1.0, x_pow, v_pow: vec![0; dim] }] }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self { dim, terms: vec![Monomial { coef: value, x_pow: vec![0; dim], v_pow: vec![0; dim] }] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn add(mut self, other: Polynomial) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        self.terms.extend(other.terms);
        Ok(self)
    }

    fn value(&self, x: &[f64], v: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(x, v)).sum()
    }

    fn grad_x(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.dim];
        for t in &self.terms {
            for (i, g) in grad.iter_mut().enumerate() {
                let p = t.x_pow[i];
                if p == 0 {
                    continue;
                }
                let rest: f64 = (0..self.dim)
                    .map(|j| if j == i { x[j].powi(p as i32 - 1) } else { x[j].powi(t.x_pow[j] as i32) })
                    .product();
                *g += t.coef * p as f64 * rest * t.velocity_factor(v);
            }
        }
        grad
    }

    /// `∫_0^len g(x + s v, v) ds` by expanding each monomial in `s`.
    fn segment_integral(&self, x: &[f64], v: &[f64], len: f64) -> f64 {
        let mut total = 0.0;
        for t in &self.terms {
            let mut poly = vec![1.0];
            for j in 0..self.dim {
                for _ in 0..t.x_pow[j] {
                    // Multiply by (x_j + v_j s).
                    let mut next = vec![0.0; poly.len() + 1];
                    for (k, c) in poly.iter().enumerate() {
                        next[k] += c * x[j];
                        next[k + 1] += c * v[j];
                    }
                    poly = next;
                }
            }
            let integral: f64 = poly
                .iter()
                .enumerate()
                .map(|(k, c)| c * len.powi(k as i32 + 1) / (k + 1) as f64)
                .sum();
            total += t.coef * t.velocity_factor(v) * integral;
        }
        total
    }

    fn flipped(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let odd = t.v_pow.iter().map(|p| p % 2).sum::<u32>() % 2 == 1;
                Monomial { coef: if odd { -t.coef } else { t.coef }, ..t.clone() }
            })
            .collect();
        Self { dim: self.dim, terms }
    }
}

pub type PhaseFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Observable `g(x, v)`: a polynomial (exact gradients and segment integrals)
/// or an arbitrary function (finite-difference gradients, Gauss–Legendre segments).
#[derive(Clone)]
pub enum PhaseFunction {
    Polynomial(Polynomial),
    Custom(PhaseFn),
}

impl fmt::Debug for PhaseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhaseFunction::Polynomial(p) => f.debug_tuple("Polynomial").field(p).finish(),
            PhaseFunction::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl From<Polynomial> for PhaseFunction {
    fn from(p: Polynomial) -> Self {
        PhaseFunction::Polynomial(p)
    }
}

/// Gauss–Legendre order used for non-polynomial segment integrals.
pub const SEGMENT_NODES: usize = 8;

fn legendre_nodes() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(SEGMENT_NODES))
}

impl PhaseFunction {
    pub fn custom(f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        PhaseFunction::Custom(Arc::new(f))
    }

    /// Function of the position only.
    pub fn of_x(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        PhaseFunction::Custom(Arc::new(move |x, _| f(x)))
    }

    pub fn value(&self, x: &[f64], v: &[f64]) -> f64 {
        match self {
            PhaseFunction::Polynomial(p) => p.value(x, v),
            PhaseFunction::Custom(f) => f(x, v),
        }
    }

    /// `∇_x g(x, v)`.
    pub fn grad_x(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            PhaseFunction::Polynomial(p) => p.grad_x(x, v),
            PhaseFunction::Custom(f) => {
                let mut probe = x.to_vec();
                (0..x.len())
                    .map(|i| {
                        let h = 1e-5 * (1.0 + x[i].abs());
                        probe[i] = x[i] + h;
                        let up = f(&probe, v);
                        probe[i] = x[i] - h;
                        let down = f(&probe, v);
                        probe[i] = x[i];
                        (up - down) / (2.0 * h)
                    })
                    .collect()
            }
        }
    }

    /// `Qg(x, v) = g(x, -v)`.
    pub fn flipped(&self) -> Self {
        match self {
            PhaseFunction::Polynomial(p) => PhaseFunction::Polynomial(p.flipped()),
            PhaseFunction::Custom(f) => {
                let f = f.clone();
                PhaseFunction::custom(move |x, v| {
                    let w: Vec<f64> = v.iter().map(|vi| -vi).collect();
                    f(x, &w)
                })
            }
        }
    }

    /// `∫_0^len g(x + s v, v) ds`.
    pub fn segment_integral(&self, x: &[f64], v: &[f64], len: f64) -> f64 {
        if len <= 0.0 {
            return 0.0;
        }
        match self {
            PhaseFunction::Polynomial(p) => p.segment_integral(x, v, len),
            PhaseFunction::Custom(f) => {
                let (nodes, weights) = legendre_nodes();
                let mut y = x.to_vec();
                nodes
                    .iter()
                    .zip(weights)
                    .map(|(&z, &w)| {
                        let s = 0.5 * len * (z + 1.0);
                        for (yj, (xj, vj)) in y.iter_mut().zip(x.iter().zip(v)) {
                            *yj = xj + s * vj;
                        }
                        0.5 * len * w * f(&y, v)
                    })
                    .sum()
            }
        }
    }
}

/// Nonconstant test functions `x^a v^b`, ordered by total `x`-degree and then by
/// velocity pattern, truncated to `count` elements.
pub fn polynomial_basis(dim: usize, count: usize) -> Vec<PhaseFunction> {
    let mut out = Vec::with_capacity(count);
    let patterns: Vec<Vec<u32>> = (0..1usize << dim)
        .map(|mask| (0..dim).map(|j| ((mask >> j) & 1) as u32).collect())
        .collect();
    let mut degree = 0u32;
    while out.len() < count {
        for x_pow in exponents_of_degree(dim, degree) {
            for v_pow in &patterns {
                if degree == 0 && v_pow.iter().all(|&p| p == 0) {
                    continue;
                }
                if out.len() == count {
                    return out;
                }
                let m = Monomial { coef: 1.0, x_pow: x_pow.clone(), v_pow: v_pow.clone() };
                out.push(PhaseFunction::Polynomial(Polynomial { dim, terms: vec![m] }));
            }
        }
        degree += 1;
    }
    out
}

fn exponents_of_degree(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    if dim == 1 {
        return vec![vec![degree]];
    }
    let mut out = Vec::new();
    for first in (0..=degree).rev() {
        for mut rest in exponents_of_degree(dim - 1, degree - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample_poly() -> Polynomial {
        Polynomial::new(
            2,
            vec![
                Monomial { coef: 1.5, x_pow: vec![2, 1], v_pow: vec![1, 0] },
                Monomial { coef: -0.5, x_pow: vec![0, 3], v_pow: vec![1, 1] },
                Monomial { coef: 2.0, x_pow: vec![0, 0], v_pow: vec![0, 1] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn polynomial_segment_integral_matches_custom() {
        let p = sample_poly();
        let q = p.clone();
        let custom = PhaseFunction::custom(move |x, v| q.value(x, v));
        let poly = PhaseFunction::from(p);
        let (x, v) = ([0.3, -1.2], [-1.0, 1.0]);
        assert_abs_diff_eq!(
            poly.segment_integral(&x, &v, 1.7),
            custom.segment_integral(&x, &v, 1.7),
            epsilon = 1e-12
        );
    }

    #[test]
    fn linear_segment() {
        let f = PhaseFunction::from(Polynomial::coordinate_power(1, 0, 1));
        assert_abs_diff_eq!(f.segment_integral(&[0.5], &[-1.0], 2.0), 0.5 * 2.0 - 2.0, epsilon = 1e-15);
    }

    #[test]
    fn gradients_and_flip() {
        let poly = PhaseFunction::from(sample_poly());
        let p2 = sample_poly();
        let custom = PhaseFunction::custom(move |x, v| p2.value(x, v));
        let (x, v) = ([0.7, 0.4], [1.0, -1.0]);
        for (a, b) in poly.grad_x(&x, &v).iter().zip(custom.grad_x(&x, &v)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
        }
        let w = [-1.0, 1.0];
        assert_abs_diff_eq!(poly.flipped().value(&x, &v), poly.value(&x, &w), epsilon = 1e-15);
        assert_abs_diff_eq!(custom.flipped().value(&x, &v), poly.value(&x, &w), epsilon = 1e-15);
    }

    #[test]
    fn basis_sizes() {
        let b = polynomial_basis(2, 20);
        assert_eq!(b.len(), 20);
        assert_eq!(polynomial_basis(1, 12).len(), 12);
        // No constant function: each element varies over a few probes.
        let probes = [([0.0, 0.0], [1.0, 1.0]), ([1.0, 2.0], [-1.0, 1.0]), ([-0.5, 1.5], [1.0, -1.0])];
        for g in &b {
            let values: Vec<f64> = probes.iter().map(|(x, v)| g.value(x, v)).collect();
            assert!(values.iter().any(|&y| y != values[0]));
        }
    }
}
