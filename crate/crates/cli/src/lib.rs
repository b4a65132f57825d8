//! Configuration-driven runner for the fluctuation-relation experiments.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{ConfigError, Experiment, RunConfig, Tolerances};
pub use experiments::{Check, Outcome, Table};
pub use report::{output_dir, write_artifacts, Summary, OUTPUT_ENV};

use serde::Serialize;

/// Catalog row for `fluctuant list`.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentInfo {
    pub name: &'static str,
    pub required_keys: &'static [&'static str],
    pub relation: &'static str,
}

pub fn list_experiments() -> Vec<ExperimentInfo> {
    Experiment::ALL
        .iter()
        .map(|e| ExperimentInfo { name: e.name(), required_keys: e.required_keys(), relation: e.relation() })
        .collect()
}

/// Run a validated configuration and assemble its summary.
pub fn execute(config: &RunConfig) -> fluctuant_core::Result<(Summary, Vec<Table>)> {
    let outcome = experiments::run(config)?;
    Ok((Summary::new(config, &outcome), outcome.tables))
}
