//! Experiment orchestration: configuration, execution and reports.
//!
//! Scenarios run concurrently. Each scenario's seed is derived from the
//! master seed and the scenario name, and outcomes are sorted by name, so
//! the report bytes depend only on the configuration.

mod config;
mod report;

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::bias::proposition_check;

pub use config::{
    parse_config, ExperimentConfig, OutputFormat, ScenarioConfig, CONFIG_SCHEMA, DEFAULT_EXPERIMENT,
    DEFAULT_TOL_MULTIPLIER,
};
pub use report::{
    format_f64, parse_report, render_report, to_csv_bytes, to_json_bytes, write_report, RunReport, ScenarioOutcome,
    SigDigitFormatter, CSV_HEADER, REPORT_SCHEMA,
};

pub const VERSION: &str = concat!("endocomp ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunnerError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

fn run_scenario(config: &ExperimentConfig, scenario: &ScenarioConfig) -> ScenarioOutcome {
    let pair = scenario.to_pair(config.master_seed);
    let (result, error) = match proposition_check(&pair, config.tol_multiplier) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let skipped_replications = result.as_ref().map_or(0, |r| {
        r.mean_beta_b.skipped + r.mean_beta_a.skipped + r.bias_b.skipped + r.bias_a.skipped
    });
    ScenarioOutcome {
        name: scenario.name.clone(),
        seed: pair.master_seed,
        skipped_replications,
        result,
        error,
    }
}

/// Runs every scenario. Per-scenario failures are recorded in the report
/// and never abort the others.
pub fn run_experiment(config: &ExperimentConfig) -> RunReport {
    let start = Instant::now();
    let mut scenarios: Vec<ScenarioOutcome> = config.scenarios.par_iter().map(|s| run_scenario(config, s)).collect();
    scenarios.sort_by(|a, b| a.name.cmp(&b.name));
    RunReport {
        version: VERSION.to_string(),
        config: config.clone(),
        scenarios,
        wall_clock_seconds: Some(start.elapsed().as_secs_f64()),
    }
}
