use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::bias::ScenarioPair;
use crate::dgp::DgpSpec;
use crate::error::Error;
use crate::seed::scenario_seed;

use super::RunnerError;

pub const DEFAULT_TOL_MULTIPLIER: f64 = 4.0;

/// The experiment bundled with the crate: the full mechanism grid plus the
/// cancellation, violation, attenuation and simultaneity checks.
pub const DEFAULT_EXPERIMENT: &str = include_str!("../../experiments/default.json");

/// JSON schema for experiment configuration documents.
pub const CONFIG_SCHEMA: &str = include_str!("../../schema/config.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub spec_b: DgpSpec,
    pub spec_a: DgpSpec,
    pub n_b: usize,
    pub n_a: usize,
    pub reps: usize,
}

impl ScenarioConfig {
    /// The pair to simulate, seeded from the scenario name.
    pub fn to_pair(&self, master_seed: u64) -> ScenarioPair {
        ScenarioPair {
            spec_b: self.spec_b.clone(),
            spec_a: self.spec_a.clone(),
            n_b: self.n_b,
            n_a: self.n_a,
            reps: self.reps,
            master_seed: scenario_seed(master_seed, &self.name),
        }
    }
}

/// A validated experiment with defaults applied. Field order here is the
/// key order of the echoed config in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_tol")]
    pub tol_multiplier: f64,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub scenarios: Vec<ScenarioConfig>,
}

fn default_tol() -> f64 {
    DEFAULT_TOL_MULTIPLIER
}

fn validation(path: impl Into<String>, message: impl Into<String>) -> RunnerError {
    RunnerError::Validation {
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), RunnerError> {
        if !(self.tol_multiplier.is_finite() && self.tol_multiplier > 0.0) {
            return Err(validation("tol_multiplier", "must be finite and positive"));
        }
        let mut seen = HashSet::new();
        for (i, s) in self.scenarios.iter().enumerate() {
            let at = format!("scenarios[{i}]");
            if s.name.trim().is_empty() {
                return Err(validation(format!("{at}.name"), "must be non-empty"));
            }
            if !seen.insert(s.name.as_str()) {
                return Err(validation(
                    format!("{at}.name"),
                    format!("duplicate scenario name `{}`", s.name),
                ));
            }
            for (side, spec) in [("spec_b", &s.spec_b), ("spec_a", &s.spec_a)] {
                if let Err(Error::InvalidSpec { field, message }) = spec.validate() {
                    return Err(validation(format!("{at}.{side}.{field}"), message));
                }
            }
            let p = s.spec_b.p();
            if s.spec_a.p() != p {
                return Err(validation(
                    format!("{at}.spec_a.beta"),
                    format!("has {} regressors but spec_b has {p}", s.spec_a.p()),
                ));
            }
            for (field, n) in [("n_b", s.n_b), ("n_a", s.n_a)] {
                if n < p + 1 {
                    return Err(validation(
                        format!("{at}.{field}"),
                        format!("must be at least {} (p + 1)", p + 1),
                    ));
                }
            }
            if s.reps < 2 {
                return Err(validation(format!("{at}.reps"), "must be at least 2"));
            }
        }
        Ok(())
    }
}

/// Parses and validates a JSON experiment document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, RunnerError> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| RunnerError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}
