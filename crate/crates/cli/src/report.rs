//! Artifact layout: `summary.json`, one CSV per table, and `timing.json`
//! holding the wall-clock time so the rest stays reproducible.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{RunConfig, Tolerances};
use crate::experiments::{Check, Outcome, Table};

/// Default output directory when neither `--out` nor `output_dir` is given.
pub const OUTPUT_ENV: &str = "FLUCTUANT_OUT";
const FALLBACK_DIR: &str = "fluctuant-out";

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub experiment: &'static str,
    pub seed: u64,
    pub inputs: Value,
    pub tolerances: Tolerances,
    pub results: Map<String, Value>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Summary {
    pub fn new(config: &RunConfig, outcome: &Outcome) -> Self {
        Self {
            experiment: config.experiment.name(),
            seed: config.seed,
            inputs: serde_json::to_value(config).expect("config serializes"),
            tolerances: config.tolerances.clone(),
            results: outcome.results.clone(),
            checks: outcome.checks.clone(),
            pass: outcome.pass(),
        }
    }
}

/// `--out`, then the config's `output_dir`, then `$FLUCTUANT_OUT`, then
/// `./fluctuant-out`.
pub fn output_dir(cli: Option<&Path>, config: &RunConfig) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_DIR))
}

pub fn write_artifacts(dir: &Path, summary: &Summary, tables: &[Table], elapsed: Duration) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(summary).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(dir.join("summary.json"), text)?;
    for table in tables {
        write_table(&dir.join(&table.file), table)?;
    }
    let timing = serde_json::json!({ "wall_clock_seconds": elapsed.as_secs_f64() });
    fs::write(dir.join("timing.json"), format!("{timing}\n"))
}

fn write_table(path: &Path, table: &Table) -> io::Result<()> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    writer.write_record(&table.headers)?;
    for row in &table.rows {
        writer.write_record(row.iter().map(|x| cell(*x)))?;
    }
    writer.flush()
}

fn cell(x: f64) -> String {
    if !x.is_finite() {
        String::new()
    } else if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_use_lf_and_blank_non_finite_cells() {
        let dir = tempfile::tempdir().unwrap();
        let table =
            Table { file: "t.csv".into(), headers: vec!["a", "b"], rows: vec![vec![1.5, f64::NAN], vec![-2.0, 3e-12]] };
        let path = dir.path().join("t.csv");
        write_table(&path, &table).unwrap();
        assert_eq!(fs::read_to_string(path).unwrap(), "a,b\n1.5,\n-2,3e-12\n");
    }
}
