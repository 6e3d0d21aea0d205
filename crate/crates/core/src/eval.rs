//! Accuracy metrics, prediction files, scatter export and inference timing.
//!
//! All errors are in mm on the raw (un-normalized) targets. "Overall" metrics
//! pool the 3N (truth, prediction) pairs of all three targets.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::psd::PsdTargets;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{truth} ground-truth records but {preds} predictions")]
    LengthMismatch { truth: usize, preds: usize },
    #[error("at least 2 pairs are needed, got {0}")]
    TooFewPairs(usize),
    #[error("malformed predictions: {0}")]
    MalformedPredictions(String),
    #[error("image id {0:?} appears more than once")]
    DuplicateImageId(String),
    #[error("no images to benchmark")]
    EmptyImageSet,
    #[error("reps must be at least 1")]
    ZeroReps,
    #[error("I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV I/O failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `None` when the truth values are constant and R² is undefined.
    pub r2: Option<f64>,
    /// mm².
    pub mse: f64,
    /// mm.
    pub mae: f64,
}

impl Metrics {
    /// Metrics of `pred` against `truth`; R² is relative to the truth mean.
    pub fn of(truth: &[f64], pred: &[f64]) -> Self {
        let n = truth.len() as f64;
        let mean = truth.iter().sum::<f64>() / n;
        let sse: f64 = truth.iter().zip(pred).map(|(y, p)| (y - p) * (y - p)).sum();
        let sst: f64 = truth.iter().map(|y| (y - mean) * (y - mean)).sum();
        let mae = truth.iter().zip(pred).map(|(y, p)| (y - p).abs()).sum::<f64>() / n;
        Self { r2: (sst > 0.0).then(|| 1.0 - sse / sst), mse: sse / n, mae }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerTarget {
    pub d10: Metrics,
    pub d50: Metrics,
    pub d90: Metrics,
}

impl PerTarget {
    pub fn as_array(&self) -> [Metrics; 3] {
        [self.d10, self.d50, self.d90]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub units: String,
    pub n: usize,
    pub per_target: PerTarget,
    pub overall: Metrics,
}

impl EvalReport {
    /// Plain-text table: one row per target plus the pooled row.
    pub fn to_table(&self) -> String {
        let mut out = format!("# errors in {} on raw targets, n = {}\n", self.units, self.n);
        let _ = writeln!(out, "{:<8} {:>10} {:>12} {:>10}", "target", "R2", "MSE", "MAE");
        let rows = PsdTargets::LABELS.iter().zip(self.per_target.as_array()).chain([(&"overall", self.overall)]);
        for (label, m) in rows {
            let r2 = m.r2.map_or_else(|| "undefined".to_string(), |r| format!("{r:.4}"));
            let _ = writeln!(out, "{:<8} {:>10} {:>12.6} {:>10.6}", label, r2, m.mse, m.mae);
        }
        out
    }
}

/// Per-target and pooled R²/MSE/MAE over aligned truth and prediction lists.
pub fn compute_metrics(truth: &[PsdTargets], preds: &[PsdTargets]) -> Result<EvalReport, EvalError> {
    if truth.len() != preds.len() {
        return Err(EvalError::LengthMismatch { truth: truth.len(), preds: preds.len() });
    }
    if truth.len() < 2 {
        return Err(EvalError::TooFewPairs(truth.len()));
    }
    let column = |set: &[PsdTargets], k: usize| -> Vec<f64> { set.iter().map(|t| t.as_array()[k]).collect() };
    let per = |k| Metrics::of(&column(truth, k), &column(preds, k));
    let flat = |set: &[PsdTargets]| -> Vec<f64> { set.iter().flat_map(|t| t.as_array()).collect() };
    Ok(EvalReport {
        units: "mm".into(),
        n: truth.len(),
        per_target: PerTarget { d10: per(0), d50: per(1), d90: per(2) },
        overall: Metrics::of(&flat(truth), &flat(preds)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: String,
    pub targets: PsdTargets,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    /// Name of the model or estimator that produced the predictions.
    pub source: String,
    pub records: Vec<PredictionRecord>,
}

impl PredictionSet {
    pub fn new(source: impl Into<String>, records: Vec<PredictionRecord>) -> Result<Self, EvalError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.image_id.as_str()) {
                return Err(EvalError::DuplicateImageId(r.image_id.clone()));
            }
        }
        Ok(Self { source: source.into(), records })
    }

    pub fn get(&self, image_id: &str) -> Option<&PsdTargets> {
        self.records.iter().find(|r| r.image_id == image_id).map(|r| &r.targets)
    }
}

#[derive(Serialize, Deserialize)]
struct PredictionRow {
    image_id: String,
    d10: f64,
    d50: f64,
    d90: f64,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, EvalError> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?)
}

/// Write `image_id,d10,d50,d90` rows (mm), LF line endings.
pub fn write_predictions(set: &PredictionSet, path: &Path) -> Result<(), EvalError> {
    let mut w = csv_writer(path)?;
    for r in &set.records {
        let t = r.targets;
        w.serialize(PredictionRow { image_id: r.image_id.clone(), d10: t.d10, d50: t.d50, d90: t.d90 })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path, source: &str) -> Result<PredictionSet, EvalError> {
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["image_id", "d10", "d50", "d90"] {
        return Err(EvalError::MalformedPredictions(format!(
            "expected header image_id,d10,d50,d90, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut records = Vec::new();
    for (line, row) in reader.deserialize::<PredictionRow>().enumerate() {
        let row = row.map_err(|e| EvalError::MalformedPredictions(format!("row {}: {e}", line + 1)))?;
        let targets = PsdTargets::new(row.d10, row.d50, row.d90);
        if !targets.as_array().iter().all(|v| v.is_finite()) {
            return Err(EvalError::MalformedPredictions(format!("row {}: non-finite value", line + 1)));
        }
        records.push(PredictionRecord { image_id: row.image_id, targets });
    }
    PredictionSet::new(source, records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub image_id: String,
    pub target: String,
    pub truth_mm: f64,
    pub pred_mm: f64,
}

const PANEL: f64 = 300.0;
const PAD: f64 = 40.0;

/// Write one CSV row per (image, target) and, when `svg_path` is given, a
/// three-panel predicted-vs-truth scatter with identity lines.
pub fn scatter_export(
    ids: &[String],
    truth: &[PsdTargets],
    preds: &[PsdTargets],
    csv_path: &Path,
    svg_path: Option<&Path>,
) -> Result<(), EvalError> {
    if ids.len() != truth.len() || truth.len() != preds.len() {
        return Err(EvalError::LengthMismatch { truth: truth.len(), preds: preds.len() });
    }
    let mut w = csv_writer(csv_path)?;
    for ((id, t), p) in ids.iter().zip(truth).zip(preds) {
        for (k, label) in PsdTargets::LABELS.iter().enumerate() {
            w.serialize(ScatterRow {
                image_id: id.clone(),
                target: (*label).into(),
                truth_mm: t.as_array()[k],
                pred_mm: p.as_array()[k],
            })?;
        }
    }
    w.flush()?;
    if let Some(path) = svg_path {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(scatter_svg(truth, preds).as_bytes())?;
        out.flush()?;
    }
    Ok(())
}

fn scatter_svg(truth: &[PsdTargets], preds: &[PsdTargets]) -> String {
    let width = 3.0 * (PANEL + 2.0 * PAD);
    let height = PANEL + 2.0 * PAD;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    );
    for (k, label) in PsdTargets::LABELS.iter().enumerate() {
        let values = truth.iter().chain(preds).map(|t| t.as_array()[k]);
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let x0 = k as f64 * (PANEL + 2.0 * PAD) + PAD;
        let y0 = PAD + PANEL;
        // Same scale on both axes so the identity line is the diagonal.
        let px = |v: f64| x0 + (v - lo) / span * PANEL;
        let py = |v: f64| y0 - (v - lo) / span * PANEL;
        let _ = writeln!(s, "<g class=\"panel\" data-target=\"{label}\">");
        let _ = writeln!(s, "<rect x=\"{x0}\" y=\"{PAD}\" width=\"{PANEL}\" height=\"{PANEL}\" fill=\"none\" stroke=\"black\"/>");
        let _ = writeln!(
            s,
            "<line class=\"identity\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>",
            px(lo),
            py(lo),
            px(lo + span),
            py(lo + span)
        );
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"14\">{label} (mm): x truth, y predicted</text>", x0, PAD - 10.0);
        for (t, p) in truth.iter().zip(preds) {
            let (tv, pv) = (t.as_array()[k], p.as_array()[k]);
            let _ = writeln!(s, "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"steelblue\"/>", px(tv), py(pv));
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

/// Aligned `(ids, truth, preds)` columns.
pub type ScatterColumns = (Vec<String>, Vec<PsdTargets>, Vec<PsdTargets>);

/// Read back a scatter CSV.
pub fn read_scatter(path: &Path) -> Result<ScatterColumns, EvalError> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows: Vec<ScatterRow> = reader.deserialize().collect::<Result<_, _>>()?;
    if rows.len() % 3 != 0 {
        return Err(EvalError::MalformedPredictions(format!("{} rows is not a multiple of 3", rows.len())));
    }
    let (mut ids, mut truth, mut preds) = (Vec::new(), Vec::new(), Vec::new());
    for chunk in rows.chunks(3) {
        let labels: Vec<&str> = chunk.iter().map(|r| r.target.as_str()).collect();
        if labels != PsdTargets::LABELS || chunk.iter().any(|r| r.image_id != chunk[0].image_id) {
            return Err(EvalError::MalformedPredictions(format!("bad row group for {}", chunk[0].image_id)));
        }
        ids.push(chunk[0].image_id.clone());
        truth.push(PsdTargets::from_array([chunk[0].truth_mm, chunk[1].truth_mm, chunk[2].truth_mm]));
        preds.push(PsdTargets::from_array([chunk[0].pred_mm, chunk[1].pred_mm, chunk[2].pred_mm]));
    }
    Ok((ids, truth, preds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub estimator: String,
    pub device_label: String,
    /// Images per second, `1 / seconds_per_image`.
    pub fps: f64,
    pub seconds_per_image: f64,
    /// Population standard deviation of the per-image times.
    pub std_seconds: f64,
    pub warmup: u32,
    pub reps: u32,
    pub images: usize,
    /// Model size, when the estimator has one.
    pub parameter_count: Option<u64>,
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let params = self.parameter_count.map_or_else(|| "n/a".to_string(), |p| p.to_string());
        format!(
            "{:<20} {:<16} {:>10} {:>14} {:>12}\n{:<20} {:<16} {:>10.2} {:>14.6} {:>12}\n",
            "estimator", "device", "FPS", "time/image (s)", "parameters",
            self.estimator, self.device_label, self.fps, self.seconds_per_image, params
        )
    }
}

/// Names attached to a [`BenchReport`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchLabels {
    pub estimator: String,
    pub device_label: String,
    pub parameter_count: Option<u64>,
}

/// Time `estimator` over `images` and summarize; see [`time_inference`].
pub fn benchmark_inference<T, O>(
    estimator: impl FnMut(&T) -> O,
    images: &[T],
    warmup: u32,
    reps: u32,
    labels: &BenchLabels,
) -> Result<BenchReport, EvalError> {
    let times = time_inference(estimator, images, warmup, reps)?;
    Ok(bench_report(&times, labels, warmup, reps))
}

/// `warmup` untimed passes over `images`, then `reps` timed passes with one
/// monotonic-clock measurement per image. Runs on the calling thread only.
pub fn time_inference<T, O>(
    mut estimator: impl FnMut(&T) -> O,
    images: &[T],
    warmup: u32,
    reps: u32,
) -> Result<Vec<Duration>, EvalError> {
    if images.is_empty() {
        return Err(EvalError::EmptyImageSet);
    }
    if reps == 0 {
        return Err(EvalError::ZeroReps);
    }
    for _ in 0..warmup {
        for img in images {
            std::hint::black_box(estimator(std::hint::black_box(img)));
        }
    }
    let mut times = Vec::with_capacity(images.len() * reps as usize);
    for _ in 0..reps {
        for img in images {
            let start = Instant::now();
            std::hint::black_box(estimator(std::hint::black_box(img)));
            times.push(start.elapsed());
        }
    }
    Ok(times)
}

/// Summarize per-image times into a report.
pub fn bench_report(times: &[Duration], labels: &BenchLabels, warmup: u32, reps: u32) -> BenchReport {
    let secs: Vec<f64> = times.iter().map(Duration::as_secs_f64).collect();
    let n = secs.len() as f64;
    let mean = secs.iter().sum::<f64>() / n;
    let var = secs.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    BenchReport {
        estimator: labels.estimator.clone(),
        device_label: labels.device_label.clone(),
        fps: 1.0 / mean,
        seconds_per_image: mean,
        std_seconds: var.sqrt(),
        warmup,
        reps,
        images: secs.len() / reps.max(1) as usize,
        parameter_count: labels.parameter_count,
    }
}

/// Spin on the monotonic clock for `latency`; a stand-in estimator with known cost.
pub fn busy_wait(latency: Duration) {
    let start = Instant::now();
    while start.elapsed() < latency {
        std::hint::spin_loop();
    }
}
