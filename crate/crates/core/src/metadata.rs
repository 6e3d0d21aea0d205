//! Per-scene annotation document: schema, JSON encoding and validation.
//!
//! The document is UTF-8 JSON with exactly these fields:
//!
//! ```json
//! {
//!   "shape_type": "crushed_rock",
//!   "size_mean": 10.5,
//!   "size_sigma": 7.2,
//!   "table_size": 300,
//!   "samplesize": 920,
//!   "particles": [ {"size": 11.8, "x": -11.12, "y": -2.31}, ... ]
//! }
//! ```
//!
//! Coordinates are in mm with the origin at the table center; `size` is the
//! particle diameter in mm.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::sampler::GenerationConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleRecord {
    pub size: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub shape_type: String,
    pub size_mean: f64,
    pub size_sigma: f64,
    pub table_size: f64,
    pub samplesize: u64,
    pub particles: Vec<ParticleRecord>,
}

impl SceneMetadata {
    pub fn sizes(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.size).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetadataError {
    #[error("malformed metadata document: {0}")]
    MalformedDocument(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{0}` has the wrong type")]
    TypeMismatch(String),
}

const SCENE_FIELDS: [&str; 6] = ["shape_type", "size_mean", "size_sigma", "table_size", "samplesize", "particles"];
const PARTICLE_FIELDS: [&str; 3] = ["size", "x", "y"];

/// Encode as pretty-printed JSON. Floats use the shortest representation
/// that parses back to the identical value.
pub fn serialize_metadata(meta: &SceneMetadata) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(meta).expect("metadata is always representable as JSON");
    out.push(b'\n');
    out
}

pub fn parse_metadata(bytes: &[u8]) -> Result<SceneMetadata, MetadataError> {
    let root: Value =
        serde_json::from_slice(bytes).map_err(|e| MetadataError::MalformedDocument(e.to_string()))?;
    let obj = root
        .as_object()
        .ok_or_else(|| MetadataError::MalformedDocument("top level is not an object".into()))?;
    reject_unknown(obj, &SCENE_FIELDS, "")?;

    let particles = field(obj, "particles", "particles")?
        .as_array()
        .ok_or_else(|| MetadataError::TypeMismatch("particles".into()))?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_particle(i, v))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(SceneMetadata {
        shape_type: field(obj, "shape_type", "shape_type")?
            .as_str()
            .ok_or_else(|| MetadataError::TypeMismatch("shape_type".into()))?
            .to_owned(),
        size_mean: number(obj, "size_mean", "size_mean")?,
        size_sigma: number(obj, "size_sigma", "size_sigma")?,
        table_size: number(obj, "table_size", "table_size")?,
        samplesize: field(obj, "samplesize", "samplesize")?
            .as_u64()
            .ok_or_else(|| MetadataError::TypeMismatch("samplesize".into()))?,
        particles,
    })
}

fn parse_particle(index: usize, value: &Value) -> Result<ParticleRecord, MetadataError> {
    let path = |name: &str| format!("particles[{index}].{name}");
    let obj = value
        .as_object()
        .ok_or_else(|| MetadataError::TypeMismatch(format!("particles[{index}]")))?;
    reject_unknown(obj, &PARTICLE_FIELDS, &format!("particles[{index}]."))?;
    Ok(ParticleRecord {
        size: number(obj, "size", &path("size"))?,
        x: number(obj, "x", &path("x"))?,
        y: number(obj, "y", &path("y"))?,
    })
}

fn reject_unknown(obj: &Map<String, Value>, known: &[&str], prefix: &str) -> Result<(), MetadataError> {
    match obj.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(MetadataError::MalformedDocument(format!("unknown field `{prefix}{k}`"))),
        None => Ok(()),
    }
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str, path: &str) -> Result<&'a Value, MetadataError> {
    obj.get(name).ok_or_else(|| MetadataError::MissingField(path.to_owned()))
}

fn number(obj: &Map<String, Value>, name: &str, path: &str) -> Result<f64, MetadataError> {
    field(obj, name, path)?
        .as_f64()
        .ok_or_else(|| MetadataError::TypeMismatch(path.to_owned()))
}

/// A single failed consistency or range check.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    CountMismatch { samplesize: u64, particles: usize },
    OutOfTableBounds { index: usize },
    SizeOutOfTruncationBounds { index: usize },
    MeanOutOfConfigRange { size_mean: f64 },
    SigmaOutOfConfigRange { size_sigma: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check a document for internal consistency and against the generation
/// ranges. Violations are returned as data; this never fails.
pub fn validate_metadata(meta: &SceneMetadata, config: &GenerationConfig) -> ValidationReport {
    let mut violations = Vec::new();
    if meta.samplesize != meta.particles.len() as u64 {
        violations.push(Violation::CountMismatch {
            samplesize: meta.samplesize,
            particles: meta.particles.len(),
        });
    }
    let (mu_lo, mu_hi) = config.mu_range;
    if !(meta.size_mean >= mu_lo && meta.size_mean <= mu_hi) {
        violations.push(Violation::MeanOutOfConfigRange { size_mean: meta.size_mean });
    }
    let (sigma_lo, sigma_hi) = config.sigma_range;
    if !(meta.size_sigma > 0.0 && meta.size_sigma >= sigma_lo && meta.size_sigma <= sigma_hi) {
        violations.push(Violation::SigmaOutOfConfigRange { size_sigma: meta.size_sigma });
    }
    let half = meta.table_size / 2.0;
    let (a, b) = config.trunc_bounds;
    for (index, p) in meta.particles.iter().enumerate() {
        if !(p.x.abs() <= half && p.y.abs() <= half) {
            violations.push(Violation::OutOfTableBounds { index });
        }
        if !(p.size > 0.0 && p.size >= a && p.size <= b) {
            violations.push(Violation::SizeOutOfTruncationBounds { index });
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn listing_document(n: usize) -> String {
        let particles: Vec<String> = (0..n)
            .map(|i| match i {
                0 => r#"{"size": 11.80, "x": -11.12, "y": -2.31}"#.to_owned(),
                1 => r#"{"size": 7.97, "x": -118.32, "y": 119.38}"#.to_owned(),
                _ => format!(r#"{{"size": {}, "x": 0.5, "y": -0.5}}"#, 5.0 + (i % 7) as f64),
            })
            .collect();
        format!(
            r#"{{
  "shape_type": "crushed_rock",
  "size_mean": 10.5,
  "size_sigma": 7.2,
  "table_size": 300,
  "samplesize": 920,
  "particles": [{}]
}}"#,
            particles.join(",\n    ")
        )
    }

    #[test]
    fn parses_reference_document() {
        let meta = parse_metadata(listing_document(920).as_bytes()).unwrap();
        assert_eq!(meta.shape_type, "crushed_rock");
        assert_eq!(meta.size_mean, 10.5);
        assert_eq!(meta.size_sigma, 7.2);
        assert_eq!(meta.table_size, 300.0);
        assert_eq!(meta.samplesize, 920);
        assert_eq!(meta.particles.len(), 920);
        assert_eq!(meta.particles[1], ParticleRecord { size: 7.97, x: -118.32, y: 119.38 });
        assert!(validate_metadata(&meta, &GenerationConfig::default()).is_valid());
    }

    #[test]
    fn count_mismatch_is_a_violation_not_a_parse_error() {
        let doc = r#"{"shape_type":"s","size_mean":8,"size_sigma":7,"table_size":300,"samplesize":5,
            "particles":[{"size":1,"x":0,"y":0},{"size":1,"x":0,"y":0},{"size":1,"x":0,"y":0},{"size":1,"x":0,"y":0}]}"#;
        let meta = parse_metadata(doc.as_bytes()).unwrap();
        let report = validate_metadata(&meta, &GenerationConfig::default());
        assert_eq!(report.violations, vec![Violation::CountMismatch { samplesize: 5, particles: 4 }]);
    }

    #[test]
    fn one_particle_round_trip() {
        let meta = SceneMetadata {
            shape_type: "crushed_rock".into(),
            size_mean: 10.5,
            size_sigma: 7.2,
            table_size: 300.0,
            samplesize: 1,
            particles: vec![ParticleRecord { size: 0.1 + 0.2, x: -1.0 / 3.0, y: 149.999_999_999_9 }],
        };
        assert_eq!(parse_metadata(&serialize_metadata(&meta)).unwrap(), meta);
    }

    #[test]
    fn field_names_are_exact() {
        let meta = SceneMetadata {
            shape_type: "x".into(),
            size_mean: 1.0,
            size_sigma: 1.0,
            table_size: 300.0,
            samplesize: 1,
            particles: vec![ParticleRecord { size: 1.0, x: 0.0, y: 0.0 }],
        };
        let v: Value = serde_json::from_slice(&serialize_metadata(&meta)).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        let mut expected: Vec<_> = SCENE_FIELDS.iter().map(|s| s.to_string()).collect();
        expected.sort();
        assert_eq!(keys, expected);
        let p = v["particles"][0].as_object().unwrap();
        assert_eq!(p.len(), 3);
        assert!(PARTICLE_FIELDS.iter().all(|k| p.contains_key(*k)));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_metadata(b"{not json"), Err(MetadataError::MalformedDocument(_))));
        assert!(matches!(parse_metadata(b"[1,2]"), Err(MetadataError::MalformedDocument(_))));
        let missing = r#"{"shape_type":"s","size_mean":8,"size_sigma":7,"table_size":300,"particles":[]}"#;
        assert_eq!(parse_metadata(missing.as_bytes()), Err(MetadataError::MissingField("samplesize".into())));
        let wrong = r#"{"shape_type":"s","size_mean":"8","size_sigma":7,"table_size":300,"samplesize":0,"particles":[]}"#;
        assert_eq!(parse_metadata(wrong.as_bytes()), Err(MetadataError::TypeMismatch("size_mean".into())));
        let bad_particle = r#"{"shape_type":"s","size_mean":8,"size_sigma":7,"table_size":300,"samplesize":1,"particles":[{"size":1,"x":0}]}"#;
        assert_eq!(
            parse_metadata(bad_particle.as_bytes()),
            Err(MetadataError::MissingField("particles[0].y".into()))
        );
        let extra = r#"{"shape_type":"s","size_mean":8,"size_sigma":7,"table_size":300,"samplesize":0,"particles":[],"z":1}"#;
        assert!(matches!(parse_metadata(extra.as_bytes()), Err(MetadataError::MalformedDocument(_))));
        let negative_count = r#"{"shape_type":"s","size_mean":8,"size_sigma":7,"table_size":300,"samplesize":-1,"particles":[]}"#;
        assert_eq!(
            parse_metadata(negative_count.as_bytes()),
            Err(MetadataError::TypeMismatch("samplesize".into()))
        );
    }

    fn scene(particles: Vec<ParticleRecord>) -> SceneMetadata {
        SceneMetadata {
            shape_type: "crushed_rock".into(),
            size_mean: 10.5,
            size_sigma: 7.2,
            table_size: 300.0,
            samplesize: particles.len() as u64,
            particles,
        }
    }

    #[test]
    fn out_of_table_bounds() {
        let meta = scene(vec![
            ParticleRecord { size: 5.0, x: 0.0, y: 0.0 },
            ParticleRecord { size: 5.0, x: 200.0, y: 0.0 },
            ParticleRecord { size: 5.0, x: 150.0, y: -150.0 },
        ]);
        let report = validate_metadata(&meta, &GenerationConfig::default());
        assert_eq!(report.violations, vec![Violation::OutOfTableBounds { index: 1 }]);
    }

    #[test]
    fn size_outside_truncation() {
        let meta = scene(vec![ParticleRecord { size: 25.0, x: 0.0, y: 0.0 }, ParticleRecord { size: 0.05, x: 0.0, y: 0.0 }]);
        let report = validate_metadata(&meta, &GenerationConfig::default());
        assert_eq!(
            report.violations,
            vec![
                Violation::SizeOutOfTruncationBounds { index: 0 },
                Violation::SizeOutOfTruncationBounds { index: 1 }
            ]
        );
    }

    #[test]
    fn parameter_ranges() {
        let mut meta = scene(vec![]);
        meta.size_mean = 12.5;
        meta.size_sigma = 5.9;
        let report = validate_metadata(&meta, &GenerationConfig::default());
        assert_eq!(
            report.violations,
            vec![
                Violation::MeanOutOfConfigRange { size_mean: 12.5 },
                Violation::SigmaOutOfConfigRange { size_sigma: 5.9 }
            ]
        );
    }
}
