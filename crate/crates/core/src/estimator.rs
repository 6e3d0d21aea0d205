//! Training-free PSD baseline: Otsu segmentation followed by a disk-opening
//! granulometry.
//!
//! A grain is removed by the opening of radius `k` but not `k − 1` when its
//! largest inscribed discrete disk has radius `k − 1`, so step `k` covers
//! diameters `[2(k − 1), 2k)` px (the first step is clamped to `[1, 2)` px).
//! The removed pixel counts are used directly as the weight of each size bin,
//! so the baseline's native distribution is area-weighted. Quantiles are read
//! off the binned CDF; the mass-weighted convention additionally weights each
//! bin by its center diameter cubed, as `compute_psd` does for sizes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::morphology::{dilate, squared_distance_to_background, Mask};
use crate::psd::{binned_quantiles, PsdTargets, QuantileConvention};
use crate::render::{Image, RenderConfig};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("no foreground particles found in the image")]
    NoParticles,
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// mm/px.
    pub mm_per_pixel: f64,
    /// Largest particle diameter the scene can contain, mm. Bounds the
    /// largest structuring element.
    pub max_size_mm: f64,
}

impl Calibration {
    pub fn new(mm_per_pixel: f64, max_size_mm: f64) -> Result<Self, EstimatorError> {
        let cal = Self { mm_per_pixel, max_size_mm };
        cal.validate()?;
        Ok(cal)
    }

    /// Calibration of an image produced by [`crate::render::render`].
    pub fn for_render(cfg: &RenderConfig, table_size: f64, max_size_mm: f64) -> Result<Self, EstimatorError> {
        Self::new(cfg.mm_per_pixel(table_size), max_size_mm)
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        if !(self.mm_per_pixel > 0.0 && self.mm_per_pixel.is_finite()) {
            return Err(EstimatorError::InvalidCalibration(format!("mm_per_pixel {} must be positive", self.mm_per_pixel)));
        }
        if !(self.max_size_mm > 0.0 && self.max_size_mm.is_finite()) {
            return Err(EstimatorError::InvalidCalibration(format!("max_size_mm {} must be positive", self.max_size_mm)));
        }
        Ok(())
    }

    /// Largest opening radius, px.
    pub fn max_radius(&self) -> u32 {
        (self.max_size_mm / 2.0 / self.mm_per_pixel).ceil() as u32 + 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSpectrum {
    /// Opening radii `1..=max_radius`, px.
    pub radii: Vec<u32>,
    /// Foreground pixels removed at each radius.
    pub mass_removed: Vec<u64>,
    /// Foreground pixels surviving the largest opening.
    pub residual: u64,
}

impl PatternSpectrum {
    pub fn total(&self) -> u64 {
        self.mass_removed.iter().sum::<u64>() + self.residual
    }
}

/// Rec. 601 luma, rounded to 8 bits.
fn luma(p: &[u8]) -> u8 {
    ((299 * u32::from(p[0]) + 587 * u32::from(p[1]) + 114 * u32::from(p[2]) + 500) / 1000) as u8
}

/// Global threshold maximizing between-class variance. Values above the
/// threshold are foreground. `None` when fewer than two levels are present.
pub fn otsu_threshold(histogram: &[u64; 256]) -> Option<u8> {
    let total: u64 = histogram.iter().sum();
    if histogram.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let total_f = total as f64;
    let sum_all: f64 = histogram.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = f64::NEG_INFINITY;
    let (mut first, mut last) = (0usize, 0usize);
    for (t, &count) in histogram.iter().enumerate().take(255) {
        w0 += count as f64;
        sum0 += t as f64 * count as f64;
        let w1 = total_f - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let diff = sum0 / w0 - (sum_all - sum0) / w1;
        let between = w0 * w1 * diff * diff;
        if between > best * (1.0 + 1e-12) {
            best = between;
            first = t;
            last = t;
        } else if between >= best * (1.0 - 1e-12) {
            last = t;
        }
    }
    // Flat maxima (empty histogram runs) resolve to their midpoint.
    Some(((first + last) / 2) as u8)
}

/// Particle mask from a global Otsu threshold on luma. A single-level image
/// yields an empty mask.
pub fn segment_foreground(img: &Image) -> Mask {
    let lum: Vec<u8> = img.pixels.chunks_exact(3).map(luma).collect();
    let mut histogram = [0u64; 256];
    for &v in &lum {
        histogram[usize::from(v)] += 1;
    }
    let (w, h) = (img.width as usize, img.height as usize);
    match otsu_threshold(&histogram) {
        Some(t) => Mask { width: w, height: h, data: lum.iter().map(|&v| v > t).collect() },
        None => Mask::new(w, h),
    }
}

/// Pattern spectrum over disk openings of radius `1..=max_radius`.
///
/// Each foreground pixel is assigned the largest `k` whose opening still
/// contains it (the opening transform) and counts as removed at step `k + 1`.
/// For nested structuring elements this equals the area difference between
/// consecutive openings; for discrete disks, which are not nested, it keeps
/// every count non-negative and sums exactly to the foreground area.
pub fn granulometry(mask: &Mask, max_radius: u32) -> Result<PatternSpectrum, EstimatorError> {
    if mask.count() == 0 {
        return Err(EstimatorError::NoParticles);
    }
    let dist = squared_distance_to_background(mask);
    let mut level = vec![0u32; dist.len()];
    for k in 1..=max_radius {
        let r2 = f64::from(k * k);
        let eroded = Mask { width: mask.width, height: mask.height, data: dist.iter().map(|&d| d > r2).collect() };
        if eroded.count() == 0 {
            break;
        }
        for (l, inside) in level.iter_mut().zip(dilate(&eroded, k).data) {
            if inside {
                *l = k;
            }
        }
    }
    let mut mass_removed = vec![0u64; max_radius as usize];
    let mut residual = 0;
    for (&l, &fg) in level.iter().zip(&mask.data) {
        if !fg {
            continue;
        }
        match mass_removed.get_mut(l as usize) {
            Some(m) => *m += 1,
            None => residual += 1,
        }
    }
    Ok(PatternSpectrum { radii: (1..=max_radius).collect(), mass_removed, residual })
}

/// Size distribution implied by a spectrum, as diameter bin edges in mm and
/// per-bin weights under `convention`. Residual mass joins the last bin.
pub fn spectrum_distribution(
    spectrum: &PatternSpectrum,
    mm_per_pixel: f64,
    convention: QuantileConvention,
) -> (Vec<f64>, Vec<f64>) {
    let mut edges = vec![mm_per_pixel];
    edges.extend(spectrum.radii.iter().map(|&k| 2.0 * f64::from(k) * mm_per_pixel));
    let last = spectrum.mass_removed.len().saturating_sub(1);
    let weights = spectrum
        .mass_removed
        .iter()
        .enumerate()
        .map(|(i, &area)| {
            let c = 0.5 * (edges[i] + edges[i + 1]);
            let w = (area + if i == last { spectrum.residual } else { 0 }) as f64;
            match convention {
                QuantileConvention::NumberWeighted => w,
                QuantileConvention::MassWeighted => w * c * c * c,
            }
        })
        .collect();
    (edges, weights)
}

/// Estimate d10/d50/d90 in mm from a rendered image.
pub fn estimate_psd(img: &Image, cal: &Calibration, convention: QuantileConvention) -> Result<PsdTargets, EstimatorError> {
    cal.validate()?;
    let mask = segment_foreground(img);
    let spectrum = granulometry(&mask, cal.max_radius())?;
    let (edges, weights) = spectrum_distribution(&spectrum, cal.mm_per_pixel, convention);
    binned_quantiles(&edges, &weights).map_err(|_| EstimatorError::NoParticles)
}
