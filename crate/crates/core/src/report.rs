//! Experiment reports: CSV metric rows plus a JSON summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::model::ModelParams;

pub const SCHEMA_VERSION: u32 = 1;

/// One neuron's response to one stimulus. `d_*` and `improvement_pct` belong
/// to the stimulus pair and repeat on both of its rows; `None` marks a
/// missing datum (no response on either member, or a non-positive `d_pre`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub stimulus_id: String,
    pub pair_id: usize,
    pub neuron: String,
    pub r_pre: f64,
    pub r_post: f64,
    pub d_pre: Option<f64>,
    pub d_post: Option<f64>,
    pub improvement_pct: Option<f64>,
    pub kind: String,
    pub role: String,
    /// Swept parameter, e.g. `offset_px=-4`; empty when not applicable.
    pub param: String,
}

/// Per-stimulus relaxation bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StimulusRecord {
    pub stimulus_id: String,
    pub iterations: usize,
    pub converged: bool,
    pub participating: usize,
    pub max_abs_potential: f64,
    pub clipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub pipeline_version: String,
    /// Config echo without the thread count and output directory, so
    /// reports compare equal across machines and thread counts.
    pub config: serde_json::Value,
    pub rows: Vec<MetricRow>,
    pub stimuli: Vec<StimulusRecord>,
    pub checks: Vec<Check>,
    pub summary: BTreeMap<String, serde_json::Value>,
    /// Files written, relative to the output root.
    pub artifacts: Vec<String>,
    pub failures: Vec<String>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            pipeline_version: pipeline_version(&cfg.model)?,
            config: config_echo(cfg)?,
            rows: Vec::new(),
            stimuli: Vec::new(),
            checks: Vec::new(),
            summary: BTreeMap::new(),
            artifacts: Vec::new(),
            failures: Vec::new(),
        })
    }

    pub fn is_ok(&self) -> bool {
        self.failures.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn summarize(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.summary.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    /// Writes `metrics.csv` and `report.json` under `root/<dir>` and adds
    /// them to the manifest.
    pub fn write(&mut self, root: &Path, dir: &str) -> Result<()> {
        let base = root.join(dir);
        fs::create_dir_all(&base)?;
        write_rows(&base.join("metrics.csv"), &self.rows)?;
        for name in ["metrics.csv", "report.json"] {
            let rel = format!("{dir}/{name}");
            if !self.artifacts.contains(&rel) {
                self.artifacts.push(rel);
            }
        }
        fs::write(base.join("report.json"), self.to_json()?)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Manifest entries that do not exist under `root`.
    pub fn missing_artifacts(&self, root: &Path) -> Vec<String> {
        self.artifacts.iter().filter(|a| !root.join(a).exists()).cloned().collect()
    }
}

pub fn write_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record([
            "stimulus_id",
            "pair_id",
            "neuron",
            "r_pre",
            "r_post",
            "d_pre",
            "d_post",
            "improvement_pct",
            "kind",
            "role",
            "param",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<MetricRow>, _>>()?;
    Ok(rows)
}

/// sha256 over the crate version and the model parameters.
pub fn pipeline_version(model: &ModelParams) -> Result<String> {
    let mut h = Sha256::new();
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update(serde_json::to_vec(model)?);
    Ok(hex(&h.finalize()))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn config_echo(cfg: &ExperimentConfig) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(cfg)?;
    if let Some(m) = v.as_object_mut() {
        m.remove("threads");
        m.remove("out");
    }
    Ok(v)
}
