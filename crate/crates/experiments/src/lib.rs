//! Experiment driver: configuration, orchestration and serialization.
//!
//! [`run`] validates a configuration, executes one experiment kind, and
//! writes `<out>/<kind>.csv`, `<out>/<kind>.json` and `<out>/<kind>.config`.

pub mod config;
pub mod runs;
pub mod stats;
pub mod table;

#[cfg(test)]
mod format_tests;

use std::fs;
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Value};

pub use config::{ConfigError, ExperimentConfig, Kind};
pub use runs::Assertion;

/// Exit status of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    AssertionFailed = 1,
    InvalidConfig = 2,
    SizeGuard = 3,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("size guard: {what} is {actual}, limit {limit}")]
    SizeGuard {
        what: String,
        actual: usize,
        limit: usize,
    },
    #[error("{0}")]
    Core(gfflab_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl From<gfflab_core::Error> for RunError {
    fn from(e: gfflab_core::Error) -> Self {
        match e {
            gfflab_core::Error::SizeGuard { what, actual, limit } => RunError::SizeGuard {
                what: what.to_string(),
                actual,
                limit,
            },
            other => RunError::Core(other),
        }
    }
}

impl RunError {
    pub fn status(&self) -> ExitStatus {
        match self {
            RunError::Config(_) => ExitStatus::InvalidConfig,
            RunError::SizeGuard { .. } => ExitStatus::SizeGuard,
            RunError::Core(_) | RunError::Io { .. } => ExitStatus::AssertionFailed,
        }
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub records: usize,
    pub assertions: Vec<Assertion>,
    pub snapshots: Vec<PathBuf>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn status(&self) -> ExitStatus {
        if self.passed() {
            ExitStatus::Ok
        } else {
            ExitStatus::AssertionFailed
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    kind: &'a str,
    status: &'a str,
    exit_code: i32,
    parameters: Map<String, Value>,
    git_describe: String,
    wall_time_s: f64,
    csv: Option<String>,
    records: usize,
    assertions: &'a [Assertion],
    aggregates: Map<String, Value>,
    error: Option<String>,
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn parameters(cfg: &ExperimentConfig) -> Map<String, Value> {
    cfg.render()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
        .collect()
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Validates, runs and writes outputs. Assertion failures are reported in
/// the returned [`RunReport`]; other failures are errors, and when the
/// output directory is usable a summary with the error is still written.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
    cfg.validate()?;
    if let Some((what, actual, limit)) = cfg.size_violation() {
        return Err(RunError::SizeGuard {
            what: what.to_string(),
            actual,
            limit,
        });
    }
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let base = cfg.out.join(cfg.kind.name());
    let csv = base.with_extension("csv");
    let json = base.with_extension("json");
    let conf = base.with_extension("config");
    fs::write(&conf, cfg.render()).map_err(io_err(&conf))?;
    let start = Instant::now();
    let result = runs::execute(cfg);
    let wall = start.elapsed().as_secs_f64();
    let describe = git_describe();
    match result {
        Ok(outcome) => {
            outcome.table.write_csv(&csv).map_err(io_err(&csv))?;
            log::info!("{}: {} records in {wall:.2}s", cfg.kind, outcome.table.rows.len());
            let passed = outcome.assertions.iter().all(|a| a.passed);
            let status = if passed { ExitStatus::Ok } else { ExitStatus::AssertionFailed };
            let summary = Summary {
                kind: cfg.kind.name(),
                status: if passed { "ok" } else { "assertion_failed" },
                exit_code: status as i32,
                parameters: parameters(cfg),
                git_describe: describe,
                wall_time_s: wall,
                csv: csv.file_name().map(|f| f.to_string_lossy().into_owned()),
                records: outcome.table.rows.len(),
                assertions: &outcome.assertions,
                aggregates: outcome.aggregates,
                error: None,
            };
            write_json(&json, &summary)?;
            Ok(RunReport {
                csv,
                json,
                records: outcome.table.rows.len(),
                assertions: outcome.assertions,
                snapshots: outcome.snapshots,
            })
        }
        Err(e) => {
            let err = RunError::from(e);
            let summary = Summary {
                kind: cfg.kind.name(),
                status: "error",
                exit_code: err.status() as i32,
                parameters: parameters(cfg),
                git_describe: describe,
                wall_time_s: wall,
                csv: None,
                records: 0,
                assertions: &[],
                aggregates: Map::new(),
                error: Some(err.to_string()),
            };
            write_json(&json, &summary)?;
            Err(err)
        }
    }
}

fn write_json(path: &std::path::Path, summary: &Summary<'_>) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Worker count from the text of `GFF_LAB_THREADS`; `None` when unset or
/// empty, meaning one worker per logical core.
pub fn thread_count(value: Option<&str>) -> Result<Option<usize>, ConfigError> {
    let Some(v) = value.map(str::trim).filter(|v| !v.is_empty()) else {
        return Ok(None);
    };
    match v.parse::<usize>() {
        Ok(0) => Err(ConfigError::Invalid("GFF_LAB_THREADS must be >= 1".into())),
        Ok(n) => Ok(Some(n)),
        Err(_) => Err(ConfigError::Value {
            key: "GFF_LAB_THREADS".into(),
            msg: format!("`{v}` is not a worker count"),
        }),
    }
}

/// Sizes the global worker pool from `GFF_LAB_THREADS`.
pub fn init_thread_pool() -> Result<(), ConfigError> {
    let value = std::env::var("GFF_LAB_THREADS").ok();
    if let Some(n) = thread_count(value.as_deref())? {
        // A pool that is already built keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}
