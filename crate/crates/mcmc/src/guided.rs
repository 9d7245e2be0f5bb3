//! Guided random walk on the line: keep moving in direction `v` while the
//! target accepts, reverse `v` on rejection.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Symmetric increment law `q`; only `|z|` matters to the guided walk.
#[derive(Debug, Clone, PartialEq)]
pub enum StepLaw {
    /// `z = +-size`.
    Fixed(f64),
    /// `z ~ Uniform(-max, max)`.
    Uniform(f64),
    /// `z ~ N(0, sd^2)`.
    Normal(f64),
    /// `|z| = k` with probability `probs[k - 1]`.
    Lattice(Vec<f64>),
}

impl StepLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            StepLaw::Fixed(s) | StepLaw::Uniform(s) | StepLaw::Normal(s) => s.is_finite() && *s > 0.0,
            StepLaw::Lattice(p) => {
                !p.is_empty() && p.iter().all(|&w| w >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-12
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("step law {self:?}")))
        }
    }

    /// Draws `|z|`.
    pub fn sample_magnitude<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            StepLaw::Fixed(s) => *s,
            StepLaw::Uniform(m) => m * rng.random::<f64>(),
            StepLaw::Normal(sd) => {
                let z: f64 = StandardNormal.sample(rng);
                (sd * z).abs()
            },
            StepLaw::Lattice(p) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, w) in p.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return (k + 1) as f64;
                    }
                }
                p.len() as f64
            }
        }
    }
}

/// One guided-walk transition from `(x, v)` for a target with log density
/// `log_density` (`-inf` outside the support): propose `x + |z| v`, accept
/// with probability `min{1, pi(y) / pi(x)}`, otherwise flip `v`.
pub fn guided_walk_step<R: Rng + ?Sized>(
    state: (f64, i8),
    log_density: &dyn Fn(f64) -> f64,
    q: &StepLaw,
    rng: &mut R,
) -> (f64, i8) {
    let (x, v) = state;
    let y = x + q.sample_magnitude(rng) * f64::from(v);
    let u: f64 = rng.random();
    let (ly, lx) = (log_density(y), log_density(x));
    let log_r = if ly == f64::NEG_INFINITY || !lx.is_finite() { f64::NEG_INFINITY } else { ly - lx };
    if u < log_r.min(0.0).exp() {
        (y, v)
    } else {
        (x, -v)
    }
}
