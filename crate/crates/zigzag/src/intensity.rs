//! Switching intensities `lambda_i(x, v) = rho(∂_i U(x) v_i)` and refreshment.
//!
//! Every built-in `rho` satisfies `rho(s) - rho(-s) = s`, is nondecreasing
//! with slope at most one, and dominates the canonical `s_+`.

use nonrev_core::potential::Potential;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phi::PhiEps;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum IntensityKind {
    /// `s_+`.
    Canonical,
    /// `-log phi_eps(exp(-s))`, `eps > 0`.
    Penalty { eps: f64 },
    /// `log(1 + exp(s))`.
    Barker,
    /// `s_+ + gamma` with a constant `gamma >= 0`.
    CanonicalPlusGamma { gamma: f64 },
}

impl IntensityKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            IntensityKind::Penalty { eps } if !(eps.is_finite() && eps > 0.0) => {
                Err(Error::InvalidParameter(format!("penalty needs eps > 0, got {eps}")))
            }
            IntensityKind::CanonicalPlusGamma { gamma } if !(gamma.is_finite() && gamma >= 0.0) => {
                Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    /// Intensity as a function of `s = ∂_i U(x) v_i`.
    pub fn rate(&self, s: f64) -> f64 {
        match *self {
            IntensityKind::Canonical => s.max(0.0),
            IntensityKind::Penalty { eps } => PhiEps::new(eps).map(|p| p.intensity(s)).unwrap_or(f64::NAN).max(0.0),
            IntensityKind::Barker => {
                if s > 0.0 {
                    s + (-s).exp().ln_1p()
                } else {
                    s.exp().ln_1p()
                }
            }
            IntensityKind::CanonicalPlusGamma { gamma } => s.max(0.0) + gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefreshMode {
    /// Resample `v` uniformly on `{-1, 1}^d` at rate `lambda_bar`.
    Full,
    /// Flip each coordinate independently at rate `lambda_bar / d`.
    PerCoordinateFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensitySpec {
    /// One kind per coordinate, or a single kind shared by all.
    pub kinds: Vec<IntensityKind>,
    #[serde(default)]
    pub refresh_rate: f64,
    #[serde(default = "full")]
    pub refresh_mode: RefreshMode,
}

fn full() -> RefreshMode {
    RefreshMode::Full
}

impl IntensitySpec {
    pub fn new(kinds: Vec<IntensityKind>, refresh_rate: f64, refresh_mode: RefreshMode) -> Result<Self> {
        let spec = Self { kinds, refresh_rate, refresh_mode };
        spec.validate()?;
        Ok(spec)
    }

    pub fn uniform(kind: IntensityKind, refresh_rate: f64, refresh_mode: RefreshMode) -> Result<Self> {
        Self::new(vec![kind], refresh_rate, refresh_mode)
    }

    pub fn canonical() -> Self {
        Self { kinds: vec![IntensityKind::Canonical], refresh_rate: 0.0, refresh_mode: RefreshMode::Full }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::InvalidParameter("no intensity kinds".into()));
        }
        for kind in &self.kinds {
            kind.validate()?;
        }
        if !(self.refresh_rate.is_finite() && self.refresh_rate >= 0.0) {
            return Err(Error::InvalidParameter(format!("refresh rate {}", self.refresh_rate)));
        }
        Ok(())
    }

    /// Fails unless the spec has one kind or exactly `d`.
    pub fn check_dim(&self, d: usize) -> Result<()> {
        if self.kinds.len() == 1 || self.kinds.len() == d {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: d, found: self.kinds.len() })
        }
    }

    pub fn kind(&self, i: usize) -> IntensityKind {
        if self.kinds.len() == 1 {
            self.kinds[0]
        } else {
            self.kinds[i]
        }
    }

    /// Rate of the flip channel of coordinate `i` contributed by refreshment.
    pub fn refresh_flip_rate(&self, d: usize) -> f64 {
        match self.refresh_mode {
            RefreshMode::PerCoordinateFlip => self.refresh_rate / d as f64,
            RefreshMode::Full => 0.0,
        }
    }

    /// Rate of the full-resample channel.
    pub fn resample_rate(&self) -> f64 {
        match self.refresh_mode {
            RefreshMode::Full => self.refresh_rate,
            RefreshMode::PerCoordinateFlip => 0.0,
        }
    }
}

/// `lambda_i(x, v)` for the switching part of coordinate `i`.
pub fn intensity(spec: &IntensitySpec, pot: &dyn Potential, i: usize, x: &[f64], v: &[f64]) -> f64 {
    spec.kind(i).rate(pot.partial(x, i) * v[i])
}

/// Velocity updates of the process: coordinate flips `R_i` and the full resample `Pi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Update {
    Flip(usize),
    Resample,
}

/// Total rate of each update at `(x, v)`: `Flip(0..d)` followed by `Resample`.
/// Flip channels include per-coordinate refreshment.
pub fn channel_rates(spec: &IntensitySpec, pot: &dyn Potential, x: &[f64], v: &[f64]) -> Vec<(Update, f64)> {
    let d = x.len();
    let extra = spec.refresh_flip_rate(d);
    (0..d)
        .map(|i| (Update::Flip(i), intensity(spec, pot, i, x, v) + extra))
        .chain(std::iter::once((Update::Resample, spec.resample_rate())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nonrev_core::potential::GaussianPotential;

    #[test]
    fn known_values() {
        let pot = GaussianPotential::standard(1).unwrap();
        let spec = IntensitySpec::canonical();
        assert_eq!(intensity(&spec, &pot, 0, &[2.0], &[1.0]), 2.0);
        assert_eq!(intensity(&spec, &pot, 0, &[2.0], &[-1.0]), 0.0);
        let eps = 0.4f64;
        let phi1 = 2.0 * 0.5 * statrs::function::erf::erfc(eps.sqrt() / 2.0 / std::f64::consts::SQRT_2);
        assert!((IntensityKind::Penalty { eps }.rate(0.0) + phi1.ln()).abs() < 1e-14);
        assert!(IntensityKind::Penalty { eps }.rate(0.0) > 0.0);
        for s in [-3.0, 0.5, 40.0] {
            let b = IntensityKind::Barker;
            assert!((b.rate(s) - b.rate(-s) - s).abs() < 1e-12);
        }
    }

    #[test]
    fn validation() {
        assert!(IntensitySpec::uniform(IntensityKind::Penalty { eps: 0.0 }, 0.0, RefreshMode::Full).is_err());
        assert!(IntensitySpec::uniform(IntensityKind::CanonicalPlusGamma { gamma: -1.0 }, 0.0, RefreshMode::Full).is_err());
        assert!(IntensitySpec::uniform(IntensityKind::Barker, -1.0, RefreshMode::Full).is_err());
        let spec = IntensitySpec::new(vec![IntensityKind::Barker, IntensityKind::Canonical], 0.0, RefreshMode::Full).unwrap();
        assert!(spec.check_dim(2).is_ok());
        assert!(spec.check_dim(3).is_err());
    }
}
