use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{fourth_claim_verdict_with, Verdict};
use crate::error::{ErrorKind, LabError, Result};
use crate::operators::operator_norm;

use super::config::ScenarioConfig;
use super::report::{ReportBody, RunMeta, RunReport, ToolInfo};

pub const REPORT_FILE: &str = "report.json";
pub const META_FILE: &str = "meta.json";
pub const LADDER_FILE: &str = "ladder.csv";
pub const INDEX_FILE: &str = "index.json";

/// Runs the full pipeline for one scenario.
///
/// A chain whose certificate fails at the configured tolerances is a
/// numeric failure: its verdict would rest on untrustworthy arithmetic.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport> {
    let started = Instant::now();
    let (op, x, probes) = cfg.realize()?;
    let gs = cfg.gs_config();
    let v = fourth_claim_verdict_with(
        &op,
        &x,
        cfg.depth,
        &probes,
        &gs,
        cfg.generator,
        &cfg.verdict_thresholds,
    )?;
    if !v.certificate.holds(&gs.thresholds, x.norm()) {
        return Err(LabError::NumericFailure(format!(
            "scenario {}: orbit certificate fails at the configured tolerances: {:?}",
            cfg.name, v.certificate
        )));
    }
    let norm = operator_norm(&op)?;
    let body = ReportBody::new(cfg.clone(), norm, &v);
    log::info!("{}: verdict {}", cfg.name, body.verdict);
    Ok(RunReport {
        body,
        meta: RunMeta {
            wall_time_seconds: started.elapsed().as_secs_f64(),
        },
    })
}

/// Writes `bytes` to `path` via a temporary sibling and a rename, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| LabError::InvalidInput(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes `report.json`, `meta.json` and `ladder.csv` under `out/<name>/`.
pub fn write_run(report: &RunReport, out: &Path) -> Result<PathBuf> {
    let dir = out.join(&report.body.scenario.name);
    fs::create_dir_all(&dir)?;
    write_atomic(&dir.join(LADDER_FILE), report.body.ladder_csv().as_bytes())?;
    let mut meta = serde_json::to_string_pretty(&report.meta)?;
    meta.push('\n');
    write_atomic(&dir.join(META_FILE), meta.as_bytes())?;
    write_atomic(&dir.join(REPORT_FILE), report.body.to_json().as_bytes())?;
    Ok(dir)
}

pub fn read_report(path: &Path) -> Result<ReportBody> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| LabError::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)?;
    ScenarioConfig::from_json(&text)
        .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
}

/// Every `*.json` file directly under `dir`, sorted by file name.
pub fn load_config_dir(dir: &Path) -> Result<Vec<ScenarioConfig>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths.iter().map(|p| load_config(p)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioStatus {
    Ok,
    Failed(ErrorKind),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub name: String,
    pub status: ScenarioStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchIndex {
    pub tool: ToolInfo,
    pub scenarios: Vec<IndexEntry>,
}

impl BatchIndex {
    /// Most severe failure kind, if any scenario failed.
    pub fn worst_failure(&self) -> Option<ErrorKind> {
        let rank = |k: ErrorKind| match k {
            ErrorKind::Usage => 0,
            ErrorKind::Io => 1,
            ErrorKind::NumericFailure => 2,
            ErrorKind::Inconsistency => 3,
        };
        self.scenarios
            .iter()
            .filter_map(|e| match e.status {
                ScenarioStatus::Failed(k) => Some(k),
                ScenarioStatus::Ok => None,
            })
            .max_by_key(|k| rank(*k))
    }
}

/// Runs scenarios on a pool of `parallelism` threads, writing each report as
/// it completes and `index.json` at the end. A failing scenario is recorded
/// in the index and does not stop the others.
pub fn run_batch(configs: &[ScenarioConfig], parallelism: usize, out: &Path) -> Result<BatchIndex> {
    if parallelism == 0 {
        return Err(LabError::Config("parallelism must be at least 1".into()));
    }
    let mut seen = HashSet::new();
    for c in configs {
        if !seen.insert(c.name.as_str()) {
            return Err(LabError::Config(format!(
                "duplicate scenario name {:?}",
                c.name
            )));
        }
    }
    fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
    let scenarios: Vec<IndexEntry> = pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| {
                let outcome = run_scenario(cfg).and_then(|r| write_run(&r, out).map(|_| r));
                match outcome {
                    Ok(r) => IndexEntry {
                        name: cfg.name.clone(),
                        status: ScenarioStatus::Ok,
                        verdict: Some(r.body.verdict),
                        report: Some(format!("{}/{REPORT_FILE}", cfg.name)),
                        error: None,
                    },
                    Err(e) => {
                        log::warn!("{}: {e}", cfg.name);
                        IndexEntry {
                            name: cfg.name.clone(),
                            status: ScenarioStatus::Failed(e.kind()),
                            verdict: None,
                            report: None,
                            error: Some(e.to_string()),
                        }
                    }
                }
            })
            .collect()
    });
    let index = BatchIndex {
        tool: ToolInfo::current(),
        scenarios,
    };
    let mut text = serde_json::to_string_pretty(&index)?;
    text.push('\n');
    write_atomic(&out.join(INDEX_FILE), text.as_bytes())?;
    Ok(index)
}
