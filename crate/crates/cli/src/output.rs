//! Result tables and summaries.
//!
//! `results.csv` holds one [`ResultRow`] per computed quantity,
//! `chain_stats.csv` one [`ChainStatsRow`] per Monte Carlo estimate, and
//! `summary.json` the named checks. Nothing time-dependent is written, so a
//! rerun with the same configuration reproduces every file byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub case: String,
    pub lambda: Option<f64>,
    pub value: f64,
    /// Zero for exact values.
    pub se: f64,
    pub oracle: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainStatsRow {
    pub experiment: String,
    pub case: String,
    pub lambda: f64,
    pub estimate: f64,
    pub se: f64,
    pub replicates: usize,
    pub steps: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// How far the worst case is past its tolerance; `0` for a clean pass.
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary<'a> {
    pub experiment: &'a str,
    pub pass: bool,
    pub checks: &'a [Check],
    pub metadata: &'a BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    pub rows: Vec<ResultRow>,
    pub chain_stats: Vec<ChainStatsRow>,
    pub checks: Vec<Check>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Report {
    pub fn new(experiment: &str, seed: u64) -> Self {
        Self { experiment: experiment.into(), seed, ..Self::default() }
    }

    pub fn row(&mut self, case: impl Into<String>, lambda: Option<f64>, value: f64, se: f64, oracle: Option<f64>, pass: bool) {
        self.rows.push(ResultRow { experiment: self.experiment.clone(), case: case.into(), lambda, value, se, oracle, pass });
    }

    pub fn exact(&mut self, case: impl Into<String>, lambda: Option<f64>, value: f64, pass: bool) {
        self.row(case, lambda, value, 0.0, None, pass);
    }

    pub fn chain(&mut self, case: impl Into<String>, lambda: f64, estimate: f64, se: f64, replicates: usize, steps: impl ToString) {
        self.chain_stats.push(ChainStatsRow {
            experiment: self.experiment.clone(),
            case: case.into(),
            lambda,
            estimate,
            se,
            replicates,
            steps: steps.to_string(),
            seed: self.seed,
        });
    }

    /// Records a check that passes when `worst <= tolerance`; the stored
    /// violation is `max(0, worst - tolerance)`.
    pub fn check(&mut self, name: impl Into<String>, worst: f64, tolerance: f64) -> bool {
        let pass = worst <= tolerance;
        self.checks.push(Check { name: name.into(), pass, max_violation: (worst - tolerance).max(0.0) });
        pass
    }

    pub fn flag(&mut self, name: impl Into<String>, pass: bool) -> bool {
        self.checks.push(Check { name: name.into(), pass, max_violation: if pass { 0.0 } else { 1.0 } });
        pass
    }

    pub fn meta(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("metadata serializes");
        self.metadata.insert(key.into(), value);
    }

    pub fn pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn find_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_csv(&dir.join("results.csv"), &self.rows, ResultRowHeader)?;
        write_csv(&dir.join("chain_stats.csv"), &self.chain_stats, ChainHeader)?;
        let summary = Summary { experiment: &self.experiment, pass: self.pass(), checks: &self.checks, metadata: &self.metadata };
        let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        text.push('\n');
        fs::write(dir.join("summary.json"), text)?;
        Ok(())
    }
}

trait Header {
    const COLUMNS: &'static [&'static str];
}

struct ResultRowHeader;
impl Header for ResultRowHeader {
    const COLUMNS: &'static [&'static str] = &["experiment", "case", "lambda", "value", "se", "oracle", "pass"];
}

struct ChainHeader;
impl Header for ChainHeader {
    const COLUMNS: &'static [&'static str] = &["experiment", "case", "lambda", "estimate", "se", "replicates", "steps", "seed"];
}

// The header is written explicitly so that empty tables still carry it.
fn write_csv<T: Serialize, H: Header>(path: &Path, rows: &[T], _: H) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    writer.write_record(H::COLUMNS)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
