//! Reproducible experiment runner.
//!
//! A run reads an [`ExperimentConfig`], executes the named experiment and
//! writes `results.csv`, `chain_stats.csv` and `summary.json` into the output
//! directory. The process exit code is `0` when every check passes, `1` when
//! some check fails, `2` for an invalid configuration and `3` for a numerical
//! failure.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::fmt::Write;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use experiments::EXPERIMENTS;
pub use output::Report;

/// One line per experiment: name, then the claim it checks.
pub fn list_text() -> String {
    let width = EXPERIMENTS.iter().map(|e| e.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for e in EXPERIMENTS {
        writeln!(out, "{:width$}  {}", e.name, e.claim).expect("writing to a String");
    }
    out
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    let experiment = experiments::find(&config.experiment).ok_or_else(|| {
        let known: Vec<&str> = EXPERIMENTS.iter().map(|e| e.name).collect();
        Error::Config(format!("unknown experiment {:?}; known: {}", config.experiment, known.join(", ")))
    })?;
    (experiment.run)(config)
}

/// Exit code of a finished run.
pub fn exit_code(report: &Report) -> i32 {
    if report.pass() {
        0
    } else {
        1
    }
}
