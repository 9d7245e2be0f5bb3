//! Potentials `U` with gradients, for targets `pi(x) ∝ exp(-U(x))` on R^d.

use std::fmt::Debug;

use crate::error::{Error, Result};

/// Smooth potential with coordinatewise partial derivatives.
pub trait Potential: Send + Sync + Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// `∂_i U(x)`.
    fn partial(&self, x: &[f64], i: usize) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|i| self.partial(x, i)).collect()
    }

    /// Upper bound on `|d/dt ∂_i U(x + t v)|` for `t ∈ [0, tau]`, if known.
    fn ray_derivative_bound(&self, _x: &[f64], _v: &[f64], _i: usize, _tau: f64) -> Option<f64> {
        None
    }

    /// Per-coordinate variances when `U` is a centered diagonal Gaussian.
    fn gaussian_variances(&self) -> Option<&[f64]> {
        None
    }
}

/// `U(x) = sum x_i^2 / (2 sigma_i^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPotential {
    variances: Vec<f64>,
}

impl GaussianPotential {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::InvalidParameter("zero-dimensional potential".into()));
        }
        for (index, &value) in variances.iter().enumerate() {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::NonPositiveWeight { index, value });
            }
        }
        Ok(Self { variances })
    }

    pub fn standard(d: usize) -> Result<Self> {
        Self::new(vec![1.0; d])
    }
}

impl Potential for GaussianPotential {
    fn dim(&self) -> usize {
        self.variances.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.variances).map(|(xi, s2)| 0.5 * xi * xi / s2).sum()
    }

    fn partial(&self, x: &[f64], i: usize) -> f64 {
        x[i] / self.variances[i]
    }

    fn ray_derivative_bound(&self, _x: &[f64], v: &[f64], i: usize, _tau: f64) -> Option<f64> {
        Some(v[i].abs() / self.variances[i])
    }

    fn gaussian_variances(&self) -> Option<&[f64]> {
        Some(&self.variances)
    }
}

/// `U ≡ 0`. Not a probability target; useful for checking dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatPotential {
    pub d: usize,
}

impl Potential for FlatPotential {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn partial(&self, _x: &[f64], _i: usize) -> f64 {
        0.0
    }

    fn ray_derivative_bound(&self, _x: &[f64], _v: &[f64], _i: usize, _tau: f64) -> Option<f64> {
        Some(0.0)
    }
}

/// Separable double well `U(x) = sum a (x_i^2 - b)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleWellPotential {
    pub a: f64,
    pub b: f64,
    pub d: usize,
}

impl DoubleWellPotential {
    pub fn new(a: f64, b: f64, d: usize) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) || !b.is_finite() || d == 0 {
            return Err(Error::InvalidParameter(format!("double well a={a}, b={b}, d={d}")));
        }
        Ok(Self { a, b, d })
    }
}

impl Potential for DoubleWellPotential {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|xi| self.a * (xi * xi - self.b).powi(2)).sum()
    }

    fn partial(&self, x: &[f64], i: usize) -> f64 {
        4.0 * self.a * x[i] * (x[i] * x[i] - self.b)
    }

    fn ray_derivative_bound(&self, x: &[f64], v: &[f64], i: usize, tau: f64) -> Option<f64> {
        // d/dt ∂_i U = 4a (3 y^2 - b) v_i with y on the segment.
        let end = x[i] + tau * v[i];
        let y2 = (x[i] * x[i]).max(end * end);
        Some(4.0 * self.a * v[i].abs() * (3.0 * y2 - self.b).max(self.b.abs()))
    }
}

/// One-dimensional potential interpolated by a natural cubic spline through
/// tabulated `(x, U)` pairs, extended linearly with the end slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPotential {
    xs: Vec<f64>,
    us: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl TabulatedPotential {
    /// Requires at least three strictly increasing nodes, and end slopes
    /// pointing outward (`U' < 0` on the left, `U' > 0` on the right) so that
    /// `exp(-U)` is integrable.
    pub fn new(xs: Vec<f64>, us: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if us.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: us.len() });
        }
        if n < 3 {
            return Err(Error::InvalidParameter("tabulated potential needs at least 3 nodes".into()));
        }
        if let Some(index) = xs.iter().chain(&us).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("nodes must be strictly increasing".into()));
        }
        let m = natural_spline_moments(&xs, &us);
        let spline = Self { xs, us, m };
        let left = spline.derivative(spline.xs[0]);
        let right = spline.derivative(spline.xs[n - 1]);
        if !(left < 0.0 && right > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "end slopes must point outward (left {left}, right {right})"
            )));
        }
        Ok(spline)
    }

    fn locate(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] {
            return self.us[0] + self.derivative(self.xs[0]) * (x - self.xs[0]);
        }
        if x > self.xs[n - 1] {
            return self.us[n - 1] + self.derivative(self.xs[n - 1]) * (x - self.xs[n - 1]);
        }
        let k = self.locate(x);
        let h = self.xs[k + 1] - self.xs[k];
        let a = (self.xs[k + 1] - x) / h;
        let b = (x - self.xs[k]) / h;
        a * self.us[k]
            + b * self.us[k + 1]
            + ((a.powi(3) - a) * self.m[k] + (b.powi(3) - b) * self.m[k + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let xc = x.clamp(self.xs[0], self.xs[n - 1]);
        let k = self.locate(xc);
        let h = self.xs[k + 1] - self.xs[k];
        let a = (self.xs[k + 1] - xc) / h;
        let b = (xc - self.xs[k]) / h;
        (self.us[k + 1] - self.us[k]) / h
            + ((1.0 - 3.0 * a * a) * self.m[k] + (3.0 * b * b - 1.0) * self.m[k + 1]) * h / 6.0
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let k = self.locate(x);
        let h = self.xs[k + 1] - self.xs[k];
        ((self.xs[k + 1] - x) * self.m[k] + (x - self.xs[k]) * self.m[k + 1]) / h
    }
}

fn natural_spline_moments(xs: &[f64], us: &[f64]) -> Vec<f64> {
    // Thomas algorithm on the interior equations; M_0 = M_{n-1} = 0.
    let n = xs.len();
    let mut m = vec![0.0; n];
    let inner = n - 2;
    let mut diag = vec![0.0; inner];
    let mut upper = vec![0.0; inner];
    let mut rhs = vec![0.0; inner];
    for j in 0..inner {
        let i = j + 1;
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        diag[j] = (h0 + h1) / 3.0;
        upper[j] = h1 / 6.0;
        rhs[j] = (us[i + 1] - us[i]) / h1 - (us[i] - us[i - 1]) / h0;
    }
    for j in 1..inner {
        let lower = (xs[j + 1] - xs[j]) / 6.0;
        let w = lower / diag[j - 1];
        diag[j] -= w * upper[j - 1];
        rhs[j] -= w * rhs[j - 1];
    }
    for j in (0..inner).rev() {
        let next = if j + 1 < inner { m[j + 2] } else { 0.0 };
        m[j + 1] = (rhs[j] - upper[j] * next) / diag[j];
    }
    m
}

impl Potential for TabulatedPotential {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x[0])
    }

    fn partial(&self, x: &[f64], _i: usize) -> f64 {
        self.derivative(x[0])
    }

    fn ray_derivative_bound(&self, x: &[f64], v: &[f64], _i: usize, tau: f64) -> Option<f64> {
        // U'' is piecewise linear, so its extremes sit at knots or segment ends.
        let (lo, hi) = {
            let end = x[0] + tau * v[0];
            (x[0].min(end), x[0].max(end))
        };
        let knots = self.xs.iter().copied().filter(|&k| k > lo && k < hi);
        let worst = [lo, hi]
            .into_iter()
            .chain(knots)
            .map(|y| self.second_derivative(y).abs())
            .fold(0.0, f64::max);
        Some(worst * v[0].abs())
    }
}

/// Largest relative disagreement between `grad U` and central finite differences at `x`.
pub fn gradient_check(pot: &dyn Potential, x: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut probe = x.to_vec();
    for i in 0..pot.dim() {
        let h = 1e-6 * (1.0 + x[i].abs());
        probe[i] = x[i] + h;
        let up = pot.value(&probe);
        probe[i] = x[i] - h;
        let down = pot.value(&probe);
        probe[i] = x[i];
        let fd = (up - down) / (2.0 * h);
        let exact = pot.partial(x, i);
        worst = worst.max((fd - exact).abs() / exact.abs().max(1.0));
    }
    worst
}
