//! Orchestration: checks run in parallel on a dedicated pool, files are
//! written afterwards in config order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context as _, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::checks::{find, Assertion, Cell, Context, Outcome, SCHEMA_VERSION};
use crate::config::ExperimentConfig;

pub const THREADS_ENV: &str = "NEVLAB_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckSummary {
    pub name: String,
    pub anchor: String,
    pub status: Status,
    pub csv: String,
    pub rows: usize,
    pub assertions: Vec<Assertion>,
    pub metrics: BTreeMap<String, f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub nevlab_version: String,
    pub seed: u64,
    pub all_passed: bool,
    pub checks: Vec<CheckSummary>,
    pub config: ExperimentConfig,
}

pub struct RunResult {
    pub summary: Summary,
    pub out_dir: PathBuf,
    /// Wall time per check, in config order; not part of any artifact.
    pub timings: Vec<(String, f64)>,
}

impl RunResult {
    pub fn exit_code(&self) -> i32 {
        if self.summary.all_passed {
            0
        } else {
            1
        }
    }
}

/// `NEVLAB_THREADS`, when set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("{THREADS_ENV}={v:?} is not an integer"))?;
            anyhow::ensure!(n > 0, "{THREADS_ENV} must be positive");
            Ok(Some(n))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Renders one CSV body: header, then `schema_version` plus the check's
/// columns on every row.
pub fn render_csv(columns: &[&str], rows: &[Vec<Cell>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["schema_version"];
    header.extend_from_slice(columns);
    w.write_record(&header)?;
    for row in rows {
        anyhow::ensure!(row.len() == columns.len(), "row has {} cells for {} columns", row.len(), columns.len());
        let mut rec = vec![SCHEMA_VERSION.to_string()];
        rec.extend(row.iter().map(Cell::render));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}

fn summarise(name: &str, res: &nevlab::Result<Outcome>) -> CheckSummary {
    let check = find(name).expect("validated check name");
    let base = CheckSummary {
        name: name.into(),
        anchor: check.anchor.into(),
        status: Status::Error,
        csv: format!("{name}.csv"),
        rows: 0,
        assertions: Vec::new(),
        metrics: BTreeMap::new(),
        error: None,
    };
    match res {
        Ok(o) => {
            let ok = !o.assertions.is_empty() && o.assertions.iter().all(|a| a.passed);
            CheckSummary {
                status: if ok { Status::Pass } else { Status::Fail },
                rows: o.rows.len(),
                assertions: o.assertions.clone(),
                metrics: o.metrics.clone(),
                ..base
            }
        }
        Err(e) => CheckSummary { error: Some(e.to_string()), ..base },
    }
}

/// Executes every selected check and writes the artifacts under `out_dir`
/// (the configured directory when `None`). `threads` overrides the pool
/// size; results do not depend on it.
pub fn run(config: &ExperimentConfig, out_dir: Option<&Path>, threads: Option<usize>) -> Result<RunResult> {
    config.validate()?;
    let out_dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&config.output.dir));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let ctx = Context::new(config)?;
    let results: Vec<(nevlab::Result<Outcome>, f64)> = pool.install(|| {
        config
            .checks
            .par_iter()
            .map(|name| {
                let start = Instant::now();
                let res = (find(name).expect("validated check name").run)(&ctx);
                (res, start.elapsed().as_secs_f64())
            })
            .collect()
    });

    fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut checks = Vec::new();
    let mut timings = Vec::new();
    for (name, (res, secs)) in config.checks.iter().zip(&results) {
        let check = find(name).expect("validated check name");
        let rows: &[Vec<Cell>] = match res {
            Ok(o) => &o.rows,
            Err(_) => &[],
        };
        let body = render_csv(check.columns, rows)?;
        write_file(&out_dir.join(format!("{name}.csv")), &body)?;
        checks.push(summarise(name, res));
        timings.push((name.clone(), *secs));
    }
    let all_passed = checks.iter().all(|c| c.status == Status::Pass);
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        nevlab_version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        all_passed,
        checks,
        config: config.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&summary)?;
    json.push(b'\n');
    write_file(&out_dir.join("summary.json"), &json)?;
    write_file(&out_dir.join("config.toml"), config.emit().as_bytes())?;
    Ok(RunResult { summary, out_dir, timings })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    f.write_all(bytes).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
