//! Synthetic particle-scene datasets with exact size ground truth.
//!
//! The generation loop is `sampler` → `physics` → `render`, annotated through
//! `metadata` and `psd`. `estimator` is a training-free baseline that turns
//! an image back into d10/d50/d90, and `eval` scores and times estimators.
//! `pipeline` ties the pieces together into on-disk datasets.

pub mod estimator;
pub mod eval;
pub mod metadata;
pub mod morphology;
pub mod normal;
pub mod physics;
pub mod pipeline;
pub mod psd;
pub mod render;
pub mod sampler;

pub use metadata::{ParticleRecord, SceneMetadata};
pub use physics::{settle, BodyState, SimConfig, SimResult};
pub use psd::{compute_psd, PsdTargets, QuantileConvention};
pub use sampler::{GenerationConfig, SceneSpec, TruncNormalParams};
pub use render::{read_png, render, write_png, Image, RenderConfig};
pub use estimator::{estimate_psd, Calibration, PatternSpectrum};
pub use eval::{compute_metrics, BenchReport, EvalReport, PredictionSet};
pub use pipeline::{ManifestRecord, RunConfig};
