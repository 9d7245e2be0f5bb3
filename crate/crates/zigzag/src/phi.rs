//! `phi_eps(r) = E min{1, r exp(-eps/2 + sqrt(eps) Z)}`, `Z ~ N(0, 1)`:
//! a smoothed Metropolis acceptance function with `phi_0(r) = min{1, r}`.
//!
//! In closed form, for `r, eps > 0`,
//! `phi_eps(r) = r [1 - Phi(sqrt(eps)/2 + log r / sqrt(eps))] + [1 - Phi(sqrt(eps)/2 - log r / sqrt(eps))]`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// `log(1 - Phi(x))`, accurate in both tails.
pub fn ln_normal_sf(x: f64) -> f64 {
    if x < 30.0 {
        (0.5 * erfc(x / std::f64::consts::SQRT_2)).ln()
    } else {
        // Asymptotic Mills-ratio expansion.
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2) + 105.0 / (x2 * x2 * x2 * x2);
        -0.5 * x2 - x.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiEps {
    eps: f64,
}

impl PhiEps {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("eps = {eps}")));
        }
        Ok(Self { eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `log phi_eps(exp(t))`.
    pub fn ln_eval_log(&self, t: f64) -> f64 {
        if t == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        if self.eps == 0.0 {
            return t.min(0.0);
        }
        let s = self.eps.sqrt();
        let a = 0.5 * s;
        log_add_exp(t + ln_normal_sf(a + t / s), ln_normal_sf(a - t / s))
    }

    /// `phi_eps(r)` for `r >= 0`.
    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if self.eps == 0.0 {
            return r.min(1.0);
        }
        self.ln_eval_log(r.ln()).exp()
    }

    /// `-log phi_eps(exp(-s))`: the switching intensity as a function of `s = ∂_i U(x) v_i`.
    pub fn intensity(&self, s: f64) -> f64 {
        -self.ln_eval_log(-s)
    }

    /// `sqrt(e^eps - 1)`: relative gap bound `phi_0 - phi_eps <= phi_0 sqrt(e^eps - 1)`.
    pub fn relative_gap_bound(&self) -> f64 {
        self.eps.exp_m1().sqrt()
    }

    /// `-log(1 - sqrt(e^eps - 1))`, the uniform bound on `lambda^eps - lambda^0`;
    /// `None` once `eps >= log 2`.
    pub fn intensity_gap_bound(&self) -> Option<f64> {
        let b = self.relative_gap_bound();
        (b < 1.0).then(|| -(-b).ln_1p())
    }
}
