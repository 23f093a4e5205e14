//! Benchmark harness: a declarative manifest of graphs and algorithms, run
//! as a task matrix with per-task timeouts and a machine-readable report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Dataset, RdfFormat};
use crate::interpreter::{run_procedure, RunConfig, RunError};
use crate::parser::parse_procedure;
use crate::stdlib;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("dataset {id}: {source}")]
    Dataset {
        id: String,
        source: crate::backend::BackendError,
    },
}

#[derive(Debug, Clone, Deserialize)]
pub struct BenchManifest {
    /// Per-task timeout in milliseconds.
    pub timeout_ms: Option<u64>,
    #[serde(rename = "dataset")]
    pub datasets: Vec<BenchDataset>,
    /// Defaults to the five-algorithm analytics suite.
    #[serde(rename = "algorithm")]
    pub algorithms: Option<Vec<BenchAlgorithm>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BenchDataset {
    pub id: String,
    /// Resolved relative to the manifest file's directory.
    pub path: String,
    pub edge: String,
    pub source: Option<String>,
    pub label_pred: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BenchAlgorithm {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

pub const DEFAULT_ALGORITHMS: [&str; 5] = ["BFS", "LCC", "PR", "SSSP", "WCC"];

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum BenchOutcome {
    Ok,
    Timeout,
    MemoryFallback,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub task: String,
    pub graph: String,
    pub algorithm: String,
    pub wall_ms: u128,
    pub result_rows: usize,
    pub peak_rows: usize,
    pub strategy: String,
    pub outcome: BenchOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn ok_count(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome == BenchOutcome::Ok).count()
    }

    pub fn total_wall(&self) -> Duration {
        Duration::from_millis(self.rows.iter().map(|r| r.wall_ms as u64).sum())
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:<24} {:>9} {:>12} {:>10} {:<10} outcome",
            "task", "wall_ms", "result_rows", "peak_rows", "strategy"
        )
        .unwrap();
        for row in &self.rows {
            writeln!(
                out,
                "{:<24} {:>9} {:>12} {:>10} {:<10} {}",
                row.task,
                row.wall_ms,
                row.result_rows,
                row.peak_rows,
                row.strategy,
                match row.outcome {
                    BenchOutcome::Ok => "ok".to_string(),
                    BenchOutcome::Timeout => "timeout".to_string(),
                    BenchOutcome::MemoryFallback => "memory-fallback".to_string(),
                    BenchOutcome::Error =>
                        format!("error: {}", row.error.as_deref().unwrap_or("unknown")),
                }
            )
            .unwrap();
        }
        out
    }
}

pub fn load_manifest(path: &Path) -> Result<(BenchManifest, PathBuf), BenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let manifest: BenchManifest =
        toml::from_str(&text).map_err(|e| BenchError::Manifest(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((manifest, base))
}

/// Runs the full (graph x algorithm) matrix. Per-task failures and timeouts
/// become report rows; the suite always completes.
pub fn run_bench(
    manifest: &BenchManifest,
    base_dir: &Path,
    cfg: &RunConfig,
) -> Result<BenchReport, BenchError> {
    let algorithms: Vec<BenchAlgorithm> = manifest.algorithms.clone().unwrap_or_else(|| {
        DEFAULT_ALGORITHMS
            .iter()
            .map(|name| BenchAlgorithm {
                name: name.to_string(),
                params: BTreeMap::new(),
            })
            .collect()
    });
    let mut report = BenchReport::default();
    for dataset_spec in &manifest.datasets {
        let path = base_dir.join(&dataset_spec.path);
        let format = RdfFormat::from_extension(&path).unwrap_or(RdfFormat::NTriples);
        let dataset = Dataset::load(&path, format).map_err(|source| BenchError::Dataset {
            id: dataset_spec.id.clone(),
            source,
        })?;
        for algorithm in &algorithms {
            report
                .rows
                .push(run_task(dataset_spec, &dataset, algorithm, manifest.timeout_ms, cfg));
        }
    }
    Ok(report)
}

fn run_task(
    dataset_spec: &BenchDataset,
    dataset: &Dataset,
    algorithm: &BenchAlgorithm,
    timeout_ms: Option<u64>,
    cfg: &RunConfig,
) -> BenchRow {
    let task = format!("{}/{}", dataset_spec.id, algorithm.name);
    let mut row = BenchRow {
        task,
        graph: dataset_spec.id.clone(),
        algorithm: algorithm.name.clone(),
        wall_ms: 0,
        result_rows: 0,
        peak_rows: 0,
        strategy: match cfg.strategy {
            crate::interpreter::Strategy::InMemory => "in-memory".to_string(),
            crate::interpreter::Strategy::Batched => "batched".to_string(),
        },
        outcome: BenchOutcome::Error,
        error: None,
    };
    let mut params = algorithm.params.clone();
    params.entry("edge".to_string()).or_insert_with(|| dataset_spec.edge.clone());
    let needs_source = matches!(algorithm.name.to_ascii_uppercase().as_str(), "BFS" | "SSSP");
    if needs_source {
        if let Some(source) = &dataset_spec.source {
            params.entry("source".to_string()).or_insert_with(|| source.clone());
        }
    }
    if algorithm.name.eq_ignore_ascii_case("WL") {
        if let Some(label) = &dataset_spec.label_pred {
            params.entry("label_pred".to_string()).or_insert_with(|| label.clone());
        }
    }
    let started = Instant::now();
    let outcome = (|| -> Result<(usize, usize, bool), String> {
        let source =
            stdlib::get_procedure(&algorithm.name, &params).map_err(|e| e.to_string())?;
        let ast = parse_procedure(&source).map_err(|e| e.to_string())?;
        let mut task_cfg = cfg.clone();
        if let Some(ms) = timeout_ms {
            task_cfg.run_deadline = Some(Duration::from_millis(ms));
        }
        match run_procedure(&ast, dataset, &task_cfg) {
            Ok((seq, trace)) => Ok((seq.len(), trace.peak_rows(), trace.used_fallback())),
            Err(RunError::DeadlineExceeded { .. }) | Err(RunError::QueryTimeout { .. }) => {
                Err("__timeout__".to_string())
            }
            Err(e) => Err(e.to_string()),
        }
    })();
    row.wall_ms = started.elapsed().as_millis();
    match outcome {
        Ok((result_rows, peak_rows, fell_back)) => {
            row.result_rows = result_rows;
            row.peak_rows = peak_rows;
            row.outcome = if fell_back {
                BenchOutcome::MemoryFallback
            } else {
                BenchOutcome::Ok
            };
        }
        Err(message) if message == "__timeout__" => {
            row.outcome = BenchOutcome::Timeout;
        }
        Err(message) => {
            row.outcome = BenchOutcome::Error;
            row.error = Some(message);
        }
    }
    row
}
