//! Experiment configuration documents.
//!
//! ```json
//! { "experiment": "lifted-ordering", "seed": 1, "params": { "n": 7 } }
//! ```
//!
//! `params` is specific to each experiment; every field has a default and
//! unknown keys are rejected at both levels.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    /// Output directory; `results/<experiment>` when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "empty_object")]
    pub params: serde_json::Value,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl ExperimentConfig {
    pub fn new(experiment: &str, seed: u64, params: serde_json::Value) -> Self {
        Self { experiment: experiment.into(), seed, output: None, params }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Typed experiment parameters.
    pub fn params<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.params.clone())
            .map_err(|e| Error::Config(format!("params of {}: {e}", self.experiment)))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| Path::new("results").join(&self.experiment))
    }
}

/// `0.05, 0.10, ..., 0.95`.
pub fn default_lambdas() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

/// Discount factors of a discrete-time chain must lie in `[0, 1)`.
pub fn check_discrete_lambdas(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    match lambdas.iter().find(|l| !(0.0..1.0).contains(*l)) {
        Some(l) => Err(Error::Config(format!("lambda {l} outside [0, 1)"))),
        None => Ok(()),
    }
}

/// Continuous-time discount rates must be finite and nonnegative.
pub fn check_continuous_lambdas(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    match lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        Some(l) => Err(Error::Config(format!("lambda {l} must be finite and >= 0"))),
        None => Ok(()),
    }
}

pub fn require(condition: bool, message: impl FnOnce() -> String) -> Result<()> {
    if condition {
        Ok(())
    } else {
        Err(Error::Config(message()))
    }
}
