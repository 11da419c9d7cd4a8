//! CSV, JSON and JSON-lines report files.
//!
//! Floats are printed with Rust's shortest round-trip formatting, so equal
//! values always produce equal bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use wnll_core::coverage::{CoverageEstimate, CoverageSimulation};
use wnll_core::solver::SolveStats;
use wnll_core::train::TrainReport;
use wnll_core::{LabelVector, SparseWeightGraph};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub dataset: String,
    pub method: String,
    pub n_train: usize,
    pub n_test: usize,
    pub k: usize,
    pub r: usize,
    /// Fraction in `[0, 1]`.
    pub accuracy: f64,
    /// Zero unless timing is switched on.
    pub wall_time_ms: u64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.into(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.into(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        let line = serde_json::to_string(r).map_err(|source| Error::Json { path: path.into(), source })?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One directed edge per line: `i, j, dist2, w`.
pub fn write_graph_csv(path: &Path, graph: &SparseWeightGraph) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "i,j,dist2,w").map_err(io)?;
    for i in 0..graph.len() {
        for (j, d2, wt) in graph.edges_with_distance(i) {
            writeln!(w, "{i},{j},{d2:?},{wt:?}").map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// `index, score_0.., predicted` with `index` counted from `first_index`.
pub fn write_solution_csv(path: &Path, first_index: usize, scores: &[f64], predicted: &LabelVector) -> Result<()> {
    let classes = predicted.classes();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let header: Vec<String> = (0..classes).map(|c| format!("score_{c}")).collect();
    writeln!(w, "index,{},predicted", header.join(",")).map_err(io)?;
    for (i, row) in scores.chunks(classes).enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{},{},{}", first_index + i, cells.join(","), predicted.get(i)).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Serialize)]
struct SolveLine {
    column: usize,
    iterations: usize,
    residual: f64,
}

pub fn write_solver_stats(path: &Path, stats: &SolveStats) -> Result<()> {
    let lines: Vec<SolveLine> = stats
        .iterations
        .iter()
        .zip(&stats.residuals)
        .enumerate()
        .map(|(column, (&iterations, &residual))| SolveLine { column, iterations, residual })
        .collect();
    write_jsonl(path, &lines)
}

#[derive(Serialize)]
struct Prediction {
    index: usize,
    predicted: usize,
    truth: usize,
}

pub fn write_predictions(path: &Path, predicted: &LabelVector, truth: &LabelVector) -> Result<()> {
    let rows: Vec<Prediction> = (0..predicted.len())
        .map(|index| Prediction { index, predicted: predicted.get(index), truth: truth.get(index) })
        .collect();
    write_csv_rows(path, &rows)
}

/// One row per epoch across all stages.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub step: usize,
    pub pass: usize,
    pub stage: &'static str,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub linear_accuracy: Option<f64>,
    pub wnll_accuracy: Option<f64>,
}

pub fn curve_rows(report: &TrainReport) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for s in &report.stages {
        for e in 0..s.epochs {
            rows.push(CurveRow {
                step: rows.len(),
                pass: s.pass,
                stage: s.stage.as_str(),
                epoch: e,
                loss: s.losses[e],
                lr: s.lr[e],
                linear_accuracy: s.linear_accuracy.get(e).copied(),
                wnll_accuracy: s.wnll_accuracy.get(e).copied(),
            });
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageRow {
    pub pass: usize,
    pub stage: &'static str,
    pub epochs: usize,
    pub steps: usize,
    pub skipped_batches: usize,
    pub final_loss: Option<f64>,
    pub final_linear_accuracy: Option<f64>,
    pub final_wnll_accuracy: Option<f64>,
}

pub fn stage_rows(report: &TrainReport) -> Vec<StageRow> {
    report
        .stages
        .iter()
        .map(|s| StageRow {
            pass: s.pass,
            stage: s.stage.as_str(),
            epochs: s.epochs,
            steps: s.steps,
            skipped_batches: s.skipped_batches,
            final_loss: s.losses.last().copied(),
            final_linear_accuracy: s.linear_accuracy.last().copied(),
            final_wnll_accuracy: s.wnll_accuracy.last().copied(),
        })
        .collect()
}

#[derive(Serialize)]
#[serde(untagged)]
enum LogLine<'a> {
    Header { version: &'a str, threads: usize, seed: u64 },
    Epoch(&'a CurveRow),
}

/// JSON lines: a header with version and thread cap, then one per epoch.
pub fn write_run_log(path: &Path, version: &str, threads: usize, seed: u64, curve: &[CurveRow]) -> Result<()> {
    let mut lines = vec![LogLine::Header { version, threads, seed }];
    lines.extend(curve.iter().map(LogLine::Epoch));
    write_jsonl(path, &lines)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct CouponRow {
    pub N: usize,
    pub exact: f64,
    pub asymptotic: f64,
    pub simulated: f64,
    pub stderr: f64,
}

impl CouponRow {
    pub fn new(exact: &CoverageEstimate, sim: &CoverageSimulation) -> Self {
        Self {
            N: exact.classes,
            exact: exact.expected_total,
            asymptotic: exact.asymptotic,
            simulated: sim.mean,
            stderr: sim.std_error,
        }
    }
}
