//! Particle size distribution quantiles (d10 / d50 / d90).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PsdError {
    #[error("no particle sizes supplied")]
    EmptyInput,
    #[error("particle size at index {index} is not positive ({value})")]
    NonPositiveSize { index: usize, value: f64 },
    #[error("size bins are malformed: {0}")]
    InvalidBins(String),
}

/// The (d10, d50, d90) regression label triple, in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdTargets {
    pub d10: f64,
    pub d50: f64,
    pub d90: f64,
}

impl PsdTargets {
    pub const LABELS: [&'static str; 3] = ["d10", "d50", "d90"];

    pub fn new(d10: f64, d50: f64, d90: f64) -> Self {
        Self { d10, d50, d90 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.d10, self.d50, self.d90]
    }

    pub fn from_array(values: [f64; 3]) -> Self {
        Self::new(values[0], values[1], values[2])
    }

    /// `0 < d10 <= d50 <= d90`, all finite.
    pub fn is_ordered(&self) -> bool {
        self.d10.is_finite()
            && self.d90.is_finite()
            && 0.0 < self.d10
            && self.d10 <= self.d50
            && self.d50 <= self.d90
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.d10 * k, self.d50 * k, self.d90 * k)
    }
}

/// How particles are weighted when forming the cumulative size curve.
///
/// `NumberWeighted` counts every particle once and interpolates linearly
/// between order statistics at the zero-based fractional rank `p * (n - 1)`.
/// `MassWeighted` weights each particle by `size^3` and returns the smallest
/// size whose cumulative mass fraction reaches `p` (step curve, no
/// interpolation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileConvention {
    #[default]
    NumberWeighted,
    MassWeighted,
}

const PERCENTILES: [f64; 3] = [0.1, 0.5, 0.9];

fn check_sizes(sizes: &[f64]) -> Result<(), PsdError> {
    if sizes.is_empty() {
        return Err(PsdError::EmptyInput);
    }
    // `!(s > 0)` also rejects NaN.
    if let Some((index, &value)) = sizes.iter().enumerate().find(|(_, s)| !(**s > 0.0)) {
        return Err(PsdError::NonPositiveSize { index, value });
    }
    Ok(())
}

/// Ground-truth d10/d50/d90 of a list of particle diameters.
pub fn compute_psd(sizes: &[f64], convention: QuantileConvention) -> Result<PsdTargets, PsdError> {
    check_sizes(sizes)?;
    let mut sorted = sizes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = match convention {
        QuantileConvention::NumberWeighted => PERCENTILES.map(|p| rank_interpolated(&sorted, p)),
        QuantileConvention::MassWeighted => {
            let cumulative: Vec<f64> = sorted
                .iter()
                .scan(0.0, |acc, s| {
                    *acc += s * s * s;
                    Some(*acc)
                })
                .collect();
            let total = *cumulative.last().unwrap();
            PERCENTILES.map(|p| {
                let threshold = p * total;
                let idx = cumulative.partition_point(|&c| c < threshold);
                sorted[idx.min(sorted.len() - 1)]
            })
        }
    };
    Ok(PsdTargets::from_array(q))
}

fn rank_interpolated(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Quantiles of a binned size distribution.
///
/// `edges` has one more entry than `weights`; bin `k` spans
/// `[edges[k], edges[k + 1])` and its weight is spread uniformly across the
/// bin, so the cumulative curve is piecewise linear and each quantile is
/// found by inverting it. Weights must be non-negative with a positive sum.
pub fn binned_quantiles(edges: &[f64], weights: &[f64]) -> Result<PsdTargets, PsdError> {
    if weights.is_empty() {
        return Err(PsdError::EmptyInput);
    }
    if edges.len() != weights.len() + 1 {
        return Err(PsdError::InvalidBins(format!(
            "{} edges for {} bins",
            edges.len(),
            weights.len()
        )));
    }
    if edges.windows(2).any(|w| !(w[1] > w[0])) || !(edges[0] >= 0.0) {
        return Err(PsdError::InvalidBins("edges must be non-negative and strictly increasing".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(PsdError::InvalidBins("negative or NaN weight".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(PsdError::EmptyInput);
    }
    let q = PERCENTILES.map(|p| {
        let target = p * total;
        let mut acc = 0.0;
        for (k, &w) in weights.iter().enumerate() {
            if w > 0.0 && acc + w >= target {
                let frac = ((target - acc) / w).clamp(0.0, 1.0);
                return edges[k] + frac * (edges[k + 1] - edges[k]);
            }
            acc += w;
        }
        // Rounding left the target just above the running sum; take the top
        // of the last populated bin.
        let last = weights.iter().rposition(|w| *w > 0.0).unwrap();
        edges[last + 1]
    });
    Ok(PsdTargets::from_array(q))
}
