use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use iadbench_core::protocols::MoveRecord;

use crate::config::{hash_value, MetricName, SCHEMA_VERSION};
use crate::RunnerError;

/// A metric value, or the reason it does not apply to the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricValue {
    Value(f64),
    Na(String),
}

impl MetricValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            MetricValue::Value(v) => Some(*v),
            MetricValue::Na(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub train_count: usize,
    pub observed_normals: usize,
    pub test_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achieved_noise_ratio: Option<f64>,
    pub moves: Vec<MoveRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    /// `<category>/<setting label>`.
    pub id: String,
    pub category: String,
    pub setting: String,
    pub seed: u64,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub metrics: BTreeMap<String, MetricValue>,
    /// Forgetting of this category's task; continual cells only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fm: Option<MetricValue>,
    pub bank_vectors: usize,
    pub bank_bytes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl CellResult {
    pub fn metric(&self, m: MetricName) -> Option<&MetricValue> {
        self.metrics.get(m.key())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinualResult {
    pub order: Vec<String>,
    /// Row `l` (1-based) holds image AUROC on tasks `1..=l` after step `l`.
    pub task_matrix: Vec<Vec<f64>>,
    pub fm_per_task: Vec<f64>,
    pub fm_mean: f64,
}

/// Wall-clock latency in milliseconds after warm-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyRecord {
    Stats(LatencyStats),
    Na(String),
}

/// Everything that varies between identical runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub cells: BTreeMap<String, LatencyRecord>,
    /// Process peak resident set (best effort).
    pub peak_rss_bytes: Option<u64>,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub schema: u32,
    pub config_hash: String,
    /// Canonical config (no `output_dir`) the hash was computed from.
    pub config: serde_json::Value,
    pub seed: u64,
    pub metrics: Vec<MetricName>,
    pub cells: Vec<CellResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continual: Option<ContinualResult>,
    pub timings: Timings,
}

impl RunResults {
    pub fn failed_cells(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.status == CellStatus::Failed)
            .count()
    }

    /// Canonical JSON: keys sorted at every level, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("results serialize");
        let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, RunnerError> {
        let r: RunResults =
            serde_json::from_str(text).map_err(|e| RunnerError::InvalidResults(e.to_string()))?;
        if r.schema != SCHEMA_VERSION {
            return Err(RunnerError::InvalidResults(format!(
                "unsupported schema {}",
                r.schema
            )));
        }
        r.verify_hash()?;
        Ok(r)
    }

    pub fn read(path: &Path) -> Result<Self, RunnerError> {
        let text = fs::read_to_string(path).map_err(|e| RunnerError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Recomputes the hash of the embedded config.
    pub fn verify_hash(&self) -> Result<(), RunnerError> {
        let computed = hash_value(&self.config);
        if computed != self.config_hash {
            return Err(RunnerError::HashMismatch {
                recorded: self.config_hash.clone(),
                computed,
            });
        }
        Ok(())
    }
}
