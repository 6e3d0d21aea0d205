//! Top-down orthographic software rasterizer for settled sphere scenes.
//!
//! The camera looks straight down the −z axis at the table center. Pixel
//! `(col, row)` covers world `x ∈ [col, col+1)/s − V/2` and
//! `y ∈ V_h/2 − [row, row+1)/s`, where `V` is the viewport width in mm,
//! `s = width / V` px/mm and `V_h = height / s`. Every pixel is sampled on a
//! fixed `k×k` grid; each sample ray hits the sphere whose surface is highest
//! at that `(x, y)`, shaded as `max(0, n·l)·albedo + ambient`. Misses take the
//! seeded value-noise background. Output is byte-deterministic.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metadata::SceneMetadata;
use crate::physics::SimResult;
use crate::sampler::mix64;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("viewport of {viewport} mm does not cover the {table_size} mm table")]
    ViewportTooSmall { viewport: f64, table_size: f64 },
    #[error("invalid render config: {0}")]
    InvalidConfig(String),
    #[error("simulation has {bodies} bodies but metadata lists {particles} particles")]
    SceneMismatch { bodies: usize, particles: usize },
    #[error("image I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("PNG encoding failed: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("PNG decoding failed: {0}")]
    Decode(#[from] png::DecodingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    /// Border around the table, mm. Used when `viewport` is unset.
    pub margin: f64,
    /// Visible width in mm; defaults to `table_size + 2·margin`.
    pub viewport: Option<f64>,
    /// Direction towards the light; normalized before use.
    pub light_direction: [f64; 3],
    pub ambient: f64,
    pub particle_base_albedo: f64,
    pub albedo_jitter: f64,
    pub background_base_albedo: f64,
    pub background_noise_amplitude: f64,
    /// Samples per pixel; must be a perfect square (k×k grid).
    pub antialias_samples: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            margin: 10.0,
            viewport: None,
            light_direction: [-1.0, -1.0, 2.5],
            ambient: 0.25,
            particle_base_albedo: 0.9,
            albedo_jitter: 0.15,
            background_base_albedo: 0.35,
            background_noise_amplitude: 0.05,
            antialias_samples: 4,
        }
    }
}

impl RenderConfig {
    pub fn viewport_for(&self, table_size: f64) -> f64 {
        self.viewport.unwrap_or(table_size + 2.0 * self.margin)
    }

    /// mm per pixel for a given table.
    pub fn mm_per_pixel(&self, table_size: f64) -> f64 {
        self.viewport_for(table_size) / f64::from(self.width)
    }

    fn grid_side(&self) -> Option<u32> {
        let k = (f64::from(self.antialias_samples)).sqrt().round() as u32;
        (k >= 1 && k * k == self.antialias_samples).then_some(k)
    }

    pub fn validate(&self, table_size: f64) -> Result<(), RenderError> {
        let bad = |m: String| Err(RenderError::InvalidConfig(m));
        if self.width < 64 || self.height < 64 {
            return bad(format!("image {}x{} is smaller than 64x64", self.width, self.height));
        }
        if self.grid_side().is_none() {
            return bad(format!("antialias_samples {} is not a positive perfect square", self.antialias_samples));
        }
        let l = self.light_direction;
        if !(l.iter().map(|c| c * c).sum::<f64>() > 0.0) {
            return bad("light_direction is zero".into());
        }
        let unit = [
            ("ambient", self.ambient),
            ("particle_base_albedo", self.particle_base_albedo),
            ("albedo_jitter", self.albedo_jitter),
            ("background_base_albedo", self.background_base_albedo),
            ("background_noise_amplitude", self.background_noise_amplitude),
        ];
        if let Some((name, v)) = unit.iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
            return bad(format!("{name} = {v} is outside [0, 1]"));
        }
        let viewport = self.viewport_for(table_size);
        if !(viewport >= table_size) {
            return Err(RenderError::ViewportTooSmall { viewport, table_size });
        }
        Ok(())
    }
}

/// Row-major 8-bit RGB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, pixels: vec![0; width as usize * height as usize * 3] }
    }

    pub fn from_gray(width: u32, height: u32, gray: &[u8]) -> Self {
        assert_eq!(gray.len(), width as usize * height as usize);
        Self { width, height, pixels: gray.iter().flat_map(|&g| [g, g, g]).collect() }
    }

    pub fn pixel(&self, col: u32, row: u32) -> [u8; 3] {
        let i = (row as usize * self.width as usize + col as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

fn unit_hash(seed: u64, a: u64, b: u64) -> f64 {
    let h = mix64(seed ^ mix64(a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ mix64(b)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Per-particle albedo multiplier source, uniform in [−1, 1].
fn particle_jitter(seed: u64, index: usize) -> f64 {
    2.0 * unit_hash(seed, 0x5041_5254, index as u64) - 1.0
}

fn lattice(seed: u64, octave: u64, ix: i64, iy: i64) -> f64 {
    2.0 * unit_hash(seed ^ octave.wrapping_mul(0xA24B_AED4_963E_E407), ix as u64, iy as u64) - 1.0
}

fn value_noise(seed: u64, octave: u64, x: f64, y: f64, cell: f64) -> f64 {
    let (gx, gy) = (x / cell, y / cell);
    let (ix, iy) = (gx.floor() as i64, gy.floor() as i64);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (smooth(gx - ix as f64), smooth(gy - iy as f64));
    let v00 = lattice(seed, octave, ix, iy);
    let v10 = lattice(seed, octave, ix + 1, iy);
    let v01 = lattice(seed, octave, ix, iy + 1);
    let v11 = lattice(seed, octave, ix + 1, iy + 1);
    let top = v00 + tx * (v10 - v00);
    let bottom = v01 + tx * (v11 - v01);
    top + ty * (bottom - top)
}

/// Background intensity at a pixel center, in [0, 1].
pub fn background_value(cfg: &RenderConfig, scene_seed: u64, col: u32, row: u32) -> f64 {
    let (x, y) = (f64::from(col) + 0.5, f64::from(row) + 0.5);
    let noise = 0.6 * value_noise(scene_seed, 1, x, y, 32.0) + 0.4 * value_noise(scene_seed, 2, x, y, 8.0);
    (cfg.background_base_albedo + cfg.background_noise_amplitude * noise).clamp(0.0, 1.0)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

struct Disk {
    cx: f64,
    cy: f64,
    cz: f64,
    r: f64,
    albedo: f64,
}

const TILE: u32 = 16;

/// Rasterize a settled scene.
pub fn render(result: &SimResult, meta: &SceneMetadata, cfg: &RenderConfig, scene_seed: u64) -> Result<Image, RenderError> {
    cfg.validate(meta.table_size)?;
    if result.bodies.len() != meta.particles.len() {
        return Err(RenderError::SceneMismatch { bodies: result.bodies.len(), particles: meta.particles.len() });
    }
    let k = cfg.grid_side().expect("validated");
    let viewport = cfg.viewport_for(meta.table_size);
    let scale = f64::from(cfg.width) / viewport;
    let half_w = viewport / 2.0;
    let half_h = f64::from(cfg.height) / scale / 2.0;
    let l = {
        let [x, y, z] = cfg.light_direction;
        let n = (x * x + y * y + z * z).sqrt();
        [x / n, y / n, z / n]
    };

    let disks: Vec<Disk> = result
        .bodies
        .iter()
        .enumerate()
        .map(|(i, b)| Disk {
            cx: b.center.x,
            cy: b.center.y,
            cz: b.center.z,
            r: b.radius,
            albedo: (cfg.particle_base_albedo * (1.0 + cfg.albedo_jitter * particle_jitter(scene_seed, i))).clamp(0.0, 1.0),
        })
        .collect();

    // Bin disks into square pixel tiles by their bounding boxes.
    let tiles_x = cfg.width.div_ceil(TILE) as usize;
    let tiles_y = cfg.height.div_ceil(TILE) as usize;
    let mut tiles: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (i, d) in disks.iter().enumerate() {
        let col_lo = ((d.cx - d.r + half_w) * scale).floor();
        let col_hi = ((d.cx + d.r + half_w) * scale).floor();
        let row_lo = ((half_h - d.cy - d.r) * scale).floor();
        let row_hi = ((half_h - d.cy + d.r) * scale).floor();
        if col_hi < 0.0 || row_hi < 0.0 || col_lo >= f64::from(cfg.width) || row_lo >= f64::from(cfg.height) {
            continue;
        }
        let tile = |v: f64, n: usize| ((v.max(0.0) as usize) / TILE as usize).min(n - 1);
        for ty in tile(row_lo, tiles_y)..=tile(row_hi, tiles_y) {
            for tx in tile(col_lo, tiles_x)..=tile(col_hi, tiles_x) {
                tiles[ty * tiles_x + tx].push(i as u32);
            }
        }
    }

    let offsets: Vec<f64> = (0..k).map(|i| (f64::from(i) + 0.5) / f64::from(k)).collect();
    let samples = f64::from(k * k);
    let row_bytes = cfg.width as usize * 3;
    let mut img = Image::new(cfg.width, cfg.height);
    img.pixels.par_chunks_mut(row_bytes).enumerate().for_each(|(row, out)| {
        let row = row as u32;
        for col in 0..cfg.width {
            let bg = background_value(cfg, scene_seed, col, row);
            let candidates = &tiles[(row / TILE) as usize * tiles_x + (col / TILE) as usize];
            let mut acc = 0.0;
            for &sy in &offsets {
                let y = half_h - (f64::from(row) + sy) / scale;
                for &sx in &offsets {
                    let x = (f64::from(col) + sx) / scale - half_w;
                    let mut best: Option<(f64, f64)> = None;
                    for &i in candidates {
                        let d = &disks[i as usize];
                        let (dx, dy) = (x - d.cx, y - d.cy);
                        let h2 = d.r * d.r - dx * dx - dy * dy;
                        if h2 < 0.0 {
                            continue;
                        }
                        let h = h2.sqrt();
                        let z = d.cz + h;
                        if best.is_none_or(|(bz, _)| z > bz) {
                            let ndotl = (dx * l[0] + dy * l[1] + h * l[2]) / d.r;
                            best = Some((z, ndotl.max(0.0) * d.albedo + cfg.ambient));
                        }
                    }
                    acc += best.map_or(bg, |(_, shade)| shade.min(1.0));
                }
            }
            let v = quantize(acc / samples);
            let o = col as usize * 3;
            out[o..o + 3].copy_from_slice(&[v, v, v]);
        }
    });
    Ok(img)
}

/// Write an 8-bit RGB, non-interlaced PNG.
pub fn write_png(img: &Image, path: &Path) -> Result<(), RenderError> {
    let file = File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), img.width, img.height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&img.pixels)?;
    writer.finish()?;
    Ok(())
}

/// Read an 8-bit RGB PNG (as produced by [`write_png`]); 8-bit gray and RGBA
/// inputs are converted.
pub fn read_png(path: &Path) -> Result<Image, RenderError> {
    let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    let mut reader = decoder.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| RenderError::InvalidConfig("PNG too large to decode".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());
    if info.bit_depth != png::BitDepth::Eight {
        return Err(RenderError::InvalidConfig(format!("unsupported PNG bit depth {:?}", info.bit_depth)));
    }
    let pixels = match info.color_type {
        png::ColorType::Rgb => buf,
        png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
        other => return Err(RenderError::InvalidConfig(format!("unsupported PNG color type {other:?}"))),
    };
    Ok(Image { width: info.width, height: info.height, pixels })
}
