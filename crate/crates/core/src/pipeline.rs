//! On-disk datasets: run configuration, scene generation, the manifest, and
//! the evaluate / predict / bench loops over a generated dataset.
//!
//! A dataset directory holds `scene_<id>.json` + `scene_<id>.png` per scene,
//! the `run_config.toml` it was generated from, and `manifest.jsonl` with one
//! record per scene. The manifest is written last, via a temporary file and
//! a rename, so its presence means every scene file is complete.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{estimate_psd, Calibration, EstimatorError};
use crate::eval::{
    benchmark_inference, busy_wait, compute_metrics, read_predictions, scatter_export, write_predictions, BenchLabels,
    BenchReport, EvalError, EvalReport, PredictionRecord, PredictionSet,
};
use crate::metadata::{serialize_metadata, ParticleRecord, SceneMetadata};
use crate::physics::{settle, PhysicsError, SimConfig};
use crate::psd::{compute_psd, PsdError, PsdTargets, QuantileConvention};
use crate::render::{read_png, render, write_png, RenderConfig, RenderError};
use crate::sampler::{derive_seed, mix64, sample_scene_spec_with_seed, GenerationConfig, SamplerError};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const RUN_CONFIG_FILE: &str = "run_config.toml";
/// Extra derived seeds tried for a scene that fails to settle.
pub const MAX_RETRIES: u64 = 3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scene {scene_id} did not settle after {attempts} attempts")]
    NonConvergence { scene_id: u64, attempts: u64 },
    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("predictions reference image ids missing from the manifest: {}", .0.join(", "))]
    UnknownImageId(Vec<String>),
    #[error("no predictions for image ids: {}", .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Psd(#[from] PsdError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

impl PipelineError {
    /// Process exit code: 2 usage/config, 3 data, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Sampler(SamplerError::InvalidConfig(_)) => 2,
            Self::Physics(PhysicsError::InvalidConfig(_)) => 2,
            Self::Render(RenderError::InvalidConfig(_) | RenderError::ViewportTooSmall { .. }) => 2,
            Self::Eval(EvalError::ZeroReps) | Self::Estimator(EstimatorError::InvalidCalibration(_)) => 2,
            Self::Io { .. } | Self::Render(RenderError::Io(_) | RenderError::Encode(_)) => 4,
            Self::Eval(EvalError::Io(_)) | Self::Physics(PhysicsError::Trace(_)) => 4,
            Self::Eval(EvalError::Csv(e)) if e.is_io_error() => 4,
            _ => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            other => Err(PipelineError::Config(format!("unknown preset {other:?} (expected desk or paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_scenes: u32,
    /// Must fit in a signed 64-bit integer so the config stays valid TOML.
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub convention: QuantileConvention,
    pub generation: GenerationConfig,
    pub simulation: SimConfig,
    pub render: RenderConfig,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => Self {
                n_scenes: 50,
                master_seed: 1,
                output_dir: PathBuf::from("dataset"),
                convention: QuantileConvention::default(),
                generation: GenerationConfig { count_range: (100, 300), ..GenerationConfig::default() },
                simulation: SimConfig::default(),
                render: RenderConfig { width: 256, height: 256, ..RenderConfig::default() },
            },
            Preset::Paper => Self {
                n_scenes: 4500,
                master_seed: 1,
                output_dir: PathBuf::from("dataset"),
                convention: QuantileConvention::default(),
                generation: GenerationConfig::default(),
                simulation: SimConfig::default(),
                render: RenderConfig::default(),
            },
        }
    }

    /// Preset values overridden key by key with the TOML document `overrides`.
    pub fn from_preset_and_toml(preset: Preset, overrides: &str) -> Result<Self, PipelineError> {
        let base = toml::Table::try_from(Self::preset(preset)).map_err(|e| PipelineError::Config(e.to_string()))?;
        let over: toml::Table = overrides.parse().map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        let mut merged = base;
        merge_tables(&mut merged, over);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, preset: Preset) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_preset_and_toml(preset, &text)
    }

    pub fn to_toml(&self) -> Result<String, PipelineError> {
        toml::to_string_pretty(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.n_scenes < 1 {
            return Err(PipelineError::Config("n_scenes must be at least 1".into()));
        }
        if self.master_seed > i64::MAX as u64 {
            return Err(PipelineError::Config(format!("master_seed {} exceeds {}", self.master_seed, i64::MAX)));
        }
        self.generation.validate()?;
        self.simulation.validate()?;
        self.render.validate(self.generation.table_size)?;
        Ok(())
    }

    /// Pixel calibration of this run's images.
    pub fn calibration(&self) -> Result<Calibration, PipelineError> {
        Ok(Calibration::for_render(&self.render, self.generation.table_size, self.generation.trunc_bounds.1)?)
    }
}

fn merge_tables(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(PipelineError::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// Deterministic 80/10/10 assignment from the run seed and scene id.
pub fn split_for(master_seed: u64, scene_id: u64) -> Split {
    match derive_seed(mix64(master_seed), scene_id) % 10 {
        0..=7 => Split::Train,
        8 => Split::Val,
        _ => Split::Test,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub scene_id: u64,
    pub image_id: String,
    /// Relative to the manifest's directory.
    pub metadata_path: PathBuf,
    pub image_path: PathBuf,
    pub targets: PsdTargets,
    /// Seed the stored scene was generated from.
    pub seed: u64,
    pub converged: bool,
    pub split: Split,
}

pub fn image_id(scene_id: u64) -> String {
    format!("scene_{scene_id:06}")
}

/// Everything written for one scene.
pub struct SceneOutput {
    pub metadata: SceneMetadata,
    pub image: crate::render::Image,
    pub targets: PsdTargets,
    pub seed: u64,
    pub converged: bool,
}

/// Sample, settle, render and annotate one scene, retrying unsettled scenes
/// with `derive_seed(scene_seed, k)` for `k = 1..=MAX_RETRIES`.
pub fn generate_scene(cfg: &RunConfig, scene_id: u64) -> Result<SceneOutput, PipelineError> {
    let base_seed = derive_seed(cfg.master_seed, scene_id);
    for attempt in 0..=MAX_RETRIES {
        let seed = if attempt == 0 { base_seed } else { derive_seed(base_seed, attempt) };
        let spec = sample_scene_spec_with_seed(&cfg.generation, scene_id, seed)?;
        let result = settle(&spec, cfg.generation.table_size, &cfg.simulation)?;
        if !result.converged {
            warn!("scene {scene_id}: not settled after {} steps (seed {seed}), retrying", result.steps_taken);
            continue;
        }
        let metadata = SceneMetadata {
            shape_type: spec.shape_type.clone(),
            size_mean: spec.params.mu,
            size_sigma: spec.params.sigma,
            table_size: cfg.generation.table_size,
            samplesize: spec.count as u64,
            particles: spec
                .sizes
                .iter()
                .zip(&result.bodies)
                .map(|(&size, b)| ParticleRecord { size, x: b.center.x, y: b.center.y })
                .collect(),
        };
        let image = render(&result, &metadata, &cfg.render, seed)?;
        let targets = compute_psd(&spec.sizes, cfg.convention)?;
        return Ok(SceneOutput { metadata, image, targets, seed, converged: true });
    }
    Err(PipelineError::NonConvergence { scene_id, attempts: MAX_RETRIES + 1 })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Generate the whole dataset into `cfg.output_dir` with `workers` threads
/// (0 picks one per core). Output does not depend on `workers`.
pub fn generate(cfg: &RunConfig, workers: usize) -> Result<Vec<ManifestRecord>, PipelineError> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let manifest_path = out.join(MANIFEST_FILE);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(io_err(&manifest_path))?;
    }
    write_atomic(&out.join(RUN_CONFIG_FILE), cfg.to_toml()?.as_bytes())?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?;
    let records: Vec<ManifestRecord> = pool.install(|| {
        (0..u64::from(cfg.n_scenes))
            .into_par_iter()
            .map(|scene_id| {
                let scene = generate_scene(cfg, scene_id)?;
                let id = image_id(scene_id);
                let metadata_path = PathBuf::from(format!("{id}.json"));
                let image_path = PathBuf::from(format!("{id}.png"));
                write_atomic(&out.join(&metadata_path), &serialize_metadata(&scene.metadata))?;
                write_png(&scene.image, &out.join(&image_path))?;
                info!("scene {scene_id}: {} particles, d50 {:.3} mm", scene.metadata.samplesize, scene.targets.d50);
                Ok(ManifestRecord {
                    scene_id,
                    image_id: id,
                    metadata_path,
                    image_path,
                    targets: scene.targets,
                    seed: scene.seed,
                    converged: scene.converged,
                    split: split_for(cfg.master_seed, scene_id),
                })
            })
            .collect::<Result<_, PipelineError>>()
    })?;

    let mut body = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut body, r).expect("manifest records serialize");
        body.push(b'\n');
    }
    write_atomic(&manifest_path, &body)?;
    Ok(records)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, PipelineError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| PipelineError::Manifest {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?;
        records.push(record);
    }
    Ok(records)
}

fn dataset_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

/// The run configuration stored next to a manifest.
pub fn read_run_config(manifest: &Path) -> Result<RunConfig, PipelineError> {
    let path = dataset_dir(manifest).join(RUN_CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let cfg: RunConfig = toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Score a prediction file against manifest truths.
///
/// Predictions must cover exactly the manifest records (optionally only
/// those in `split`). Writes the JSON report to `report`, a text table next
/// to it (`.txt`), and the scatter export (`_scatter.csv`, `_scatter.svg`).
pub fn evaluate(manifest: &Path, predictions: &Path, report: &Path, split: Option<Split>) -> Result<EvalReport, PipelineError> {
    let records: Vec<ManifestRecord> =
        read_manifest(manifest)?.into_iter().filter(|r| split.is_none_or(|s| r.split == s)).collect();
    let preds = read_predictions(predictions, "predictions")?;
    let known: std::collections::HashSet<&str> = records.iter().map(|r| r.image_id.as_str()).collect();
    let unknown: Vec<String> =
        preds.records.iter().filter(|p| !known.contains(p.image_id.as_str())).map(|p| p.image_id.clone()).collect();
    if !unknown.is_empty() {
        return Err(PipelineError::UnknownImageId(unknown));
    }
    let missing: Vec<String> =
        records.iter().filter(|r| preds.get(&r.image_id).is_none()).map(|r| r.image_id.clone()).collect();
    if !missing.is_empty() {
        return Err(PipelineError::MissingPredictions(missing));
    }
    let ids: Vec<String> = records.iter().map(|r| r.image_id.clone()).collect();
    let truth: Vec<PsdTargets> = records.iter().map(|r| r.targets).collect();
    let pred: Vec<PsdTargets> = records.iter().map(|r| *preds.get(&r.image_id).expect("checked")).collect();
    let result = compute_metrics(&truth, &pred)?;

    if let Some(dir) = report.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let json = serde_json::to_string_pretty(&result).expect("report serializes") + "\n";
    fs::write(report, json).map_err(io_err(report))?;
    let table = report.with_extension("txt");
    fs::write(&table, result.to_table()).map_err(io_err(&table))?;
    let stem = report.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let scatter_csv = report.with_file_name(format!("{stem}_scatter.csv"));
    let scatter_svg = report.with_file_name(format!("{stem}_scatter.svg"));
    scatter_export(&ids, &truth, &pred, &scatter_csv, Some(&scatter_svg))?;
    Ok(result)
}

/// Run the baseline estimator over every manifest image and write the
/// prediction file. Images that show no particles are an error.
pub fn predict_baseline(manifest: &Path, out: &Path, workers: usize) -> Result<PredictionSet, PipelineError> {
    let cfg = read_run_config(manifest)?;
    let cal = cfg.calibration()?;
    let dir = dataset_dir(manifest);
    let records = read_manifest(manifest)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?;
    let predictions: Vec<PredictionRecord> = pool.install(|| {
        records
            .par_iter()
            .map(|r| {
                let img = read_png(&dir.join(&r.image_path))?;
                let targets = estimate_psd(&img, &cal, cfg.convention)?;
                Ok(PredictionRecord { image_id: r.image_id.clone(), targets })
            })
            .collect::<Result<_, PipelineError>>()
    })?;
    let set = PredictionSet::new("baseline", predictions)?;
    write_predictions(&set, out)?;
    Ok(set)
}

/// Which estimator `bench` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorSelector {
    Baseline,
    /// Busy-waits a fixed time per image; checks the harness itself.
    FixedLatency(Duration),
}

impl FromStr for EstimatorSelector {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "baseline" {
            return Ok(Self::Baseline);
        }
        s.strip_prefix("fixed-latency-ms:")
            .and_then(|ms| ms.parse::<u64>().ok())
            .map(|ms| Self::FixedLatency(Duration::from_millis(ms)))
            .ok_or_else(|| PipelineError::Config(format!("unknown estimator {s:?} (baseline or fixed-latency-ms:N)")))
    }
}

impl std::fmt::Display for EstimatorSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Baseline => write!(f, "baseline"),
            Self::FixedLatency(d) => write!(f, "fixed-latency-ms:{}", d.as_millis()),
        }
    }
}

/// Time an estimator over the manifest images (decoded up front, untimed)
/// and write the JSON report to `report`.
pub fn bench(
    manifest: &Path,
    selector: EstimatorSelector,
    warmup: u32,
    reps: u32,
    device_label: &str,
    report: &Path,
) -> Result<BenchReport, PipelineError> {
    if reps == 0 {
        return Err(PipelineError::Config("reps must be at least 1".into()));
    }
    let cfg = read_run_config(manifest)?;
    let cal = cfg.calibration()?;
    let dir = dataset_dir(manifest);
    let images = read_manifest(manifest)?
        .iter()
        .map(|r| read_png(&dir.join(&r.image_path)))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = BenchLabels { estimator: selector.to_string(), device_label: device_label.into(), parameter_count: None };
    let result = match selector {
        EstimatorSelector::Baseline => {
            benchmark_inference(|img| estimate_psd(img, &cal, cfg.convention).ok(), &images, warmup, reps, &labels)?
        }
        EstimatorSelector::FixedLatency(d) => benchmark_inference(|_| busy_wait(d), &images, warmup, reps, &labels)?,
    };
    if let Some(parent) = report.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let json = serde_json::to_string_pretty(&result).expect("report serializes") + "\n";
    fs::write(report, json).map_err(io_err(report))?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_round_trip() {
        for p in [Preset::Desk, Preset::Paper] {
            let cfg = RunConfig::preset(p);
            cfg.validate().unwrap();
            let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(back, cfg);
        }
        let desk = RunConfig::preset(Preset::Desk);
        assert_eq!((desk.n_scenes, desk.generation.count_range, desk.render.width), (50, (100, 300), 256));
        let paper = RunConfig::preset(Preset::Paper);
        assert_eq!((paper.generation.count_range, paper.render.width), ((700, 1000), 512));
    }

    #[test]
    fn overrides_merge_into_preset() {
        let cfg = RunConfig::from_preset_and_toml(
            Preset::Desk,
            "n_scenes = 3\n[generation]\ncount_range = [10, 20]\n[render]\nwidth = 128\n",
        )
        .unwrap();
        assert_eq!(cfg.n_scenes, 3);
        assert_eq!(cfg.generation.count_range, (10, 20));
        assert_eq!(cfg.generation.table_size, 300.0);
        assert_eq!((cfg.render.width, cfg.render.height), (128, 256));
    }

    #[test]
    fn bad_configs_are_usage_errors() {
        for text in ["n_scenes = 0", "[render]\nwidth = 8", "[generation]\nmu_range = [5, 1]", "bogus = 1", "[render]\nbogus = 1"] {
            let err = RunConfig::from_preset_and_toml(Preset::Desk, text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn split_is_roughly_80_10_10() {
        let mut counts = [0usize; 3];
        for id in 0..10_000 {
            counts[split_for(5, id) as usize] += 1;
        }
        assert!((7700..8300).contains(&counts[0]) && (800..1200).contains(&counts[1]) && (800..1200).contains(&counts[2]));
    }

    #[test]
    fn estimator_selector_parses() {
        assert_eq!("baseline".parse::<EstimatorSelector>().unwrap(), EstimatorSelector::Baseline);
        let s: EstimatorSelector = "fixed-latency-ms:10".parse().unwrap();
        assert_eq!(s, EstimatorSelector::FixedLatency(Duration::from_millis(10)));
        assert_eq!(s.to_string(), "fixed-latency-ms:10");
        assert!("cnn".parse::<EstimatorSelector>().is_err());
        assert!("fixed-latency-ms:x".parse::<EstimatorSelector>().is_err());
    }
}
