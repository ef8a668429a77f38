use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Resolved, ScenarioConfig};
use crate::error::{CliError, CliResult};

/// One results.csv row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub scenario: String,
    pub algorithm: String,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub method: String,
    pub seed: Option<u64>,
    pub replicate: Option<u32>,
}

/// One verified (or refuted) claim in report.json.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub holds: bool,
    /// Library operation that produced the verdict.
    pub operation: String,
    pub tolerance: f64,
    pub detail: String,
}

impl Assertion {
    pub fn new(
        name: impl Into<String>,
        holds: bool,
        operation: &str,
        tolerance: f64,
        detail: impl Into<String>,
    ) -> Self {
        Self { name: name.into(), holds, operation: operation.to_string(), tolerance, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub assertions: Vec<Assertion>,
    pub details: serde_json::Map<String, Value>,
}

impl Outcome {
    pub fn failed(&self) -> usize {
        self.assertions.iter().filter(|a| !a.holds).count()
    }
}

pub struct RunInfo<'a> {
    pub config: &'a ScenarioConfig,
    pub resolved: &'a Resolved,
    pub threads: usize,
    pub elapsed_seconds: f64,
}

pub const CSV_COLUMNS: [&str; 8] =
    ["scenario", "algorithm", "metric", "value", "stderr", "method", "seed", "replicate"];

pub fn results_csv(rows: &[Row]) -> CliResult<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).map_err(|e| CliError::Encode(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Encode(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Encode(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn metadata(info: &RunInfo<'_>) -> Value {
    let r = info.resolved;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    json!({
        "scenario": r.descriptor.id,
        "config": info.config,
        "resolved": {
            "params": r.params,
            "algorithms": r.algorithms,
            "chain_length": r.chain_length,
            "replicates": r.replicates,
            "base_seed": r.base_seed,
        },
        "replicate_seeds": (0..r.replicates).map(|i| r.replicate_seed(i)).collect::<Vec<_>>(),
        "rng": {
            "algorithm": varorder::sampler::RNG_ALGORITHM,
            "seeding": "seed_from_u64(base_seed + replicate), stream = index of the algorithm in the scenario list",
            "streams": r.algorithms.iter().map(|a| json!({"algorithm": a, "stream": r.stream_of(a)})).collect::<Vec<_>>(),
        },
        "threads": info.threads,
        "build": {
            "package": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "debug_assertions": cfg!(debug_assertions),
        },
        "tolerances": {
            "entry": varorder::tol::ENTRY,
            "inner": varorder::tol::INNER,
            "unit_eigenvalue": varorder::tol::UNIT_EIGENVALUE,
            "rho_margin": varorder::tol::RHO_MARGIN,
        },
        "created_unix_seconds": created,
        "elapsed_seconds": info.elapsed_seconds,
    })
}

pub fn report(scenario: &str, outcome: &Outcome) -> Value {
    json!({
        "scenario": scenario,
        "passed": outcome.failed() == 0,
        "assertions_total": outcome.assertions.len(),
        "assertions_failed": outcome.failed(),
        "assertions": outcome.assertions,
        "details": outcome.details,
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Writes results.csv, metadata.json and report.json into `dir`.
pub fn write_all(dir: &Path, info: &RunInfo<'_>, outcome: &Outcome) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let pretty = |v: &Value| serde_json::to_string_pretty(v).expect("JSON values serialize") + "\n";
    Ok(vec![
        write(dir, "results.csv", &results_csv(&outcome.rows)?)?,
        write(dir, "metadata.json", &pretty(&metadata(info)))?,
        write(dir, "report.json", &pretty(&report(info.resolved.descriptor.id, outcome)))?,
    ])
}
