//! Scenario runner: JSON configs in, results.csv, metadata.json and
//! report.json out.

pub mod config;
pub mod error;
pub mod output;
pub mod scenarios;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{Resolved, ScenarioConfig};
pub use error::{CliError, CliResult};
pub use output::{Assertion, Outcome, Row};

/// Runs a resolved scenario on a pool of `threads` workers.
pub fn execute(resolved: &Resolved, threads: usize) -> CliResult<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?;
    let id = resolved.descriptor.id;
    pool.install(|| (resolved.descriptor.run)(resolved)).map_err(|e| match e {
        varorder::Error::InvalidParameter(msg) => CliError::Config(format!("scenario {id}: {msg}")),
        source => CliError::Model { scenario: id.to_string(), source },
    })
}

pub struct RunOutput {
    pub outcome: Outcome,
    pub files: Vec<PathBuf>,
}

/// Resolves, executes and writes a scenario. Files are written even when an
/// assertion fails; the error then carries exit code 3.
pub fn run(config: &ScenarioConfig, out_dir: &Path, threads: usize) -> CliResult<RunOutput> {
    let resolved = config.resolve()?;
    let start = Instant::now();
    let outcome = execute(&resolved, threads)?;
    let info = output::RunInfo {
        config,
        resolved: &resolved,
        threads,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    let files = output::write_all(out_dir, &info, &outcome)?;
    let failed = outcome.failed();
    if failed > 0 {
        return Err(CliError::Assertion {
            scenario: resolved.descriptor.id.to_string(),
            failed,
            total: outcome.assertions.len(),
        });
    }
    Ok(RunOutput { outcome, files })
}

/// `VARORDER_THREADS` wins over the flag; the default is the machine's parallelism.
pub fn thread_budget(flag: Option<usize>) -> CliResult<usize> {
    if let Ok(v) = std::env::var("VARORDER_THREADS") {
        return v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Config(format!("VARORDER_THREADS={v} is not a positive integer")));
    }
    Ok(flag.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)).max(1))
}
