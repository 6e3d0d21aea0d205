//! Seeded scene sampling: truncated-normal particle diameters, per-scene
//! parameter draws and initial drop positions.
//!
//! Every function here is a pure function of its inputs and seed. Scenes get
//! independent random streams through [`derive_seed`], so a dataset can be
//! generated in any order or in parallel with identical results.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normal;

/// Truncation windows with less probability mass than this are rejected.
pub const MIN_TRUNCATED_MASS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("truncation window [{a}, {b}] holds probability mass {mass:e} under N({mu}, {sigma}^2)")]
    DegenerateTruncation { a: f64, b: f64, mu: f64, sigma: f64, mass: f64 },
    #[error("invalid truncated-normal parameters: {0}")]
    InvalidParams(String),
    #[error("table of {table_size} mm leaves no room for particles of {max_size} mm")]
    TableTooSmall { table_size: f64, max_size: f64 },
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
}

/// `size ~ TruncNormal(a, b, mu, sigma)`, all in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncNormalParams {
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl TruncNormalParams {
    pub fn new(a: f64, b: f64, mu: f64, sigma: f64) -> Result<Self, SamplerError> {
        let p = Self { a, b, mu, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if ![self.a, self.b, self.mu, self.sigma].iter().all(|v| v.is_finite()) {
            return Err(SamplerError::InvalidParams("non-finite value".into()));
        }
        if !(self.a < self.b) {
            return Err(SamplerError::InvalidParams(format!("a = {} must be below b = {}", self.a, self.b)));
        }
        if !(self.sigma > 0.0) {
            return Err(SamplerError::InvalidParams(format!("sigma = {} must be positive", self.sigma)));
        }
        Ok(())
    }

    /// Analytic CDF of the truncated distribution.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.a {
            return 0.0;
        }
        if x >= self.b {
            return 1.0;
        }
        let lo = normal::cdf((self.a - self.mu) / self.sigma);
        let hi = normal::cdf((self.b - self.mu) / self.sigma);
        (normal::cdf((x - self.mu) / self.sigma) - lo) / (hi - lo)
    }

    /// Analytic mean: `mu + sigma * (phi(alpha) - phi(beta)) / (Phi(beta) - Phi(alpha))`.
    pub fn mean(&self) -> f64 {
        let alpha = (self.a - self.mu) / self.sigma;
        let beta = (self.b - self.mu) / self.sigma;
        let z = normal::cdf(beta) - normal::cdf(alpha);
        self.mu + self.sigma * (normal::pdf(alpha) - normal::pdf(beta)) / z
    }
}

/// Draw `n` sizes by inverse-CDF sampling on the truncated interval.
///
/// Each draw consumes exactly one value from `rng`. Windows lying wholly in
/// the upper tail are sampled in mirrored form so the CDF differences stay in
/// the precise (small-probability) range.
pub fn sample_trunc_normal<R: Rng + ?Sized>(
    params: &TruncNormalParams,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>, SamplerError> {
    params.validate()?;
    if n == 0 {
        return Err(SamplerError::InvalidParams("sample count must be at least 1".into()));
    }
    let TruncNormalParams { a, b, mu, sigma } = *params;
    let mirrored = (a - mu) / sigma > 0.0;
    let (lo, hi, centre) = if mirrored { (-b, -a, -mu) } else { (a, b, mu) };
    let p_lo = normal::cdf((lo - centre) / sigma);
    let p_hi = normal::cdf((hi - centre) / sigma);
    let mass = p_hi - p_lo;
    if !(mass >= MIN_TRUNCATED_MASS) {
        return Err(SamplerError::DegenerateTruncation { a, b, mu, sigma, mass });
    }
    let sign = if mirrored { -1.0 } else { 1.0 };
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            let z = normal::quantile(p_lo + u * mass);
            (sign * (centre + sigma * z)).clamp(a, b)
        })
        .collect())
}

/// Generation ranges. Defaults are the reference dataset configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub mu_range: (f64, f64),
    pub sigma_range: (f64, f64),
    pub trunc_bounds: (f64, f64),
    pub count_range: (u32, u32),
    pub table_size: f64,
    pub shape_types: Vec<String>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            mu_range: (6.0, 12.0),
            sigma_range: (6.0, 8.0),
            trunc_bounds: (0.1, 20.0),
            count_range: (700, 1000),
            table_size: 300.0,
            shape_types: vec!["crushed_rock".to_owned()],
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |msg: String| Err(SamplerError::InvalidConfig(msg));
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ordered(self.mu_range) {
            return bad(format!("mu_range {:?} is not an ordered finite interval", self.mu_range));
        }
        if !ordered(self.sigma_range) || !(self.sigma_range.0 > 0.0) {
            return bad(format!("sigma_range {:?} must be ordered and positive", self.sigma_range));
        }
        let (a, b) = self.trunc_bounds;
        if !ordered(self.trunc_bounds) || !(a > 0.0) || !(a < b) {
            return bad(format!("trunc_bounds {:?} must satisfy 0 < a < b", self.trunc_bounds));
        }
        let (c_lo, c_hi) = self.count_range;
        if c_lo < 1 || c_lo > c_hi {
            return bad(format!("count_range {:?} must be ordered and start at 1 or more", self.count_range));
        }
        if !(self.table_size > 0.0 && self.table_size.is_finite()) {
            return bad(format!("table_size {} must be positive", self.table_size));
        }
        if self.table_size <= b {
            return bad(format!("table_size {} must exceed the largest particle size {b}", self.table_size));
        }
        if self.shape_types.is_empty() {
            return bad("shape_types is empty".into());
        }
        Ok(())
    }
}

/// Everything needed to simulate one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene_id: u64,
    pub shape_type: String,
    pub params: TruncNormalParams,
    pub count: usize,
    pub seed: u64,
    /// Particle diameters, mm.
    pub sizes: Vec<f64>,
    /// Initial sphere centers `(x, y, z)`, mm.
    pub drop_positions: Vec<[f64; 3]>,
}

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed `mix64(parent ^ mix64(index))`.
///
/// Scene `i` of a run uses `derive_seed(master_seed, i)`; the `k`-th retry
/// of that scene uses `derive_seed(scene_seed, k)`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix64(parent ^ mix64(index))
}

pub fn scene_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sample a full scene specification from the per-scene seed
/// `derive_seed(master_seed, scene_id)`.
pub fn sample_scene_spec(config: &GenerationConfig, scene_id: u64, master_seed: u64) -> Result<SceneSpec, SamplerError> {
    sample_scene_spec_with_seed(config, scene_id, derive_seed(master_seed, scene_id))
}

/// Same as [`sample_scene_spec`] but with an explicit per-scene seed.
pub fn sample_scene_spec_with_seed(config: &GenerationConfig, scene_id: u64, seed: u64) -> Result<SceneSpec, SamplerError> {
    config.validate()?;
    let mut rng = scene_rng(seed);
    let mu = rng.random_range(config.mu_range.0..=config.mu_range.1);
    let sigma = rng.random_range(config.sigma_range.0..=config.sigma_range.1);
    let count = rng.random_range(config.count_range.0..=config.count_range.1) as usize;
    let shape_type = config.shape_types[rng.random_range(0..config.shape_types.len())].clone();
    let (a, b) = config.trunc_bounds;
    let params = TruncNormalParams::new(a, b, mu, sigma)?;
    let sizes = sample_trunc_normal(&params, count, &mut rng)?;
    let drop_positions = sample_drop_positions(count, config.table_size, b, &mut rng)?;
    Ok(SceneSpec { scene_id, shape_type, params, count, seed, sizes, drop_positions })
}

/// Initial sphere centers.
///
/// `x` and `y` are uniform in `±(table_size/2 - max_size/2)`. Particles are
/// stacked in horizontal layers `max_size` apart, the lowest at
/// `z = max_size`; a layer holds about one particle per `(2·max_size)^2` of
/// drop area so neighbours rarely start overlapping.
pub fn sample_drop_positions<R: Rng + ?Sized>(
    count: usize,
    table_size: f64,
    max_size: f64,
    rng: &mut R,
) -> Result<Vec<[f64; 3]>, SamplerError> {
    if count == 0 {
        return Err(SamplerError::InvalidParams("particle count must be at least 1".into()));
    }
    if !(max_size > 0.0) {
        return Err(SamplerError::InvalidParams(format!("max_size {max_size} must be positive")));
    }
    let half = table_size / 2.0 - max_size / 2.0;
    if !(half > 0.0) {
        return Err(SamplerError::TableTooSmall { table_size, max_size });
    }
    let per_layer = (((2.0 * half) / (2.0 * max_size)).powi(2).floor() as usize).max(1);
    Ok((0..count)
        .map(|i| {
            let x = rng.random_range(-half..=half);
            let y = rng.random_range(-half..=half);
            let layer = (i / per_layer) as f64;
            [x, y, max_size * (layer + 1.0)]
        })
        .collect())
}
