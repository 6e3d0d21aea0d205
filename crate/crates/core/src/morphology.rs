//! Binary masks and Euclidean-disk morphology.
//!
//! Erosion and dilation by the discrete disk `{(dx, dy) : dx² + dy² ≤ k²}`
//! are computed exactly from squared Euclidean distance transforms
//! (Felzenszwalb–Huttenlocher lower envelope), so cost does not grow with
//! the structuring-element radius. Pixels outside the image count as
//! background.

/// Row-major binary image; `true` is foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Paint a discrete disk of integer radius `r` centered on a pixel.
    pub fn fill_disk(&mut self, cx: i64, cy: i64, r: i64) {
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                let inside = (x - cx).pow(2) + (y - cy).pow(2) <= r * r;
                if inside && x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
                    self.set(x as usize, y as usize, true);
                }
            }
        }
    }
}

const FAR: f64 = 1e20;

/// 1-D squared distance transform of `f` into `d` (lower envelope of
/// parabolas rooted at each sample).
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere.
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
            }
            break;
        }
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

/// Squared Euclidean distance from every pixel to the nearest pixel where
/// `feature` holds. Out-of-image pixels are features when `outside_is_feature`.
fn squared_distance(mask: &Mask, feature: bool, outside_is_feature: bool) -> Vec<f64> {
    // Pad by one pixel so the image border can act as a feature.
    let (w, h) = (mask.width + 2, mask.height + 2);
    let mut grid = vec![if outside_is_feature { 0.0 } else { FAR }; w * h];
    for y in 0..mask.height {
        for x in 0..mask.width {
            grid[(y + 1) * w + x + 1] = if mask.get(x, y) == feature { 0.0 } else { FAR };
        }
    }
    let n = w.max(h);
    let (mut f, mut d, mut v, mut z) = (vec![0.0; n], vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        edt_1d(&f[..h], &mut d[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut d[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&d[..w]);
    }
    let mut out = Vec::with_capacity(mask.width * mask.height);
    for y in 0..mask.height {
        out.extend_from_slice(&grid[(y + 1) * w + 1..(y + 1) * w + 1 + mask.width]);
    }
    out
}

/// Squared distance from each pixel to the nearest background pixel
/// (including the area outside the image). Zero on background.
pub fn squared_distance_to_background(mask: &Mask) -> Vec<f64> {
    squared_distance(mask, false, true)
}

pub fn erode(mask: &Mask, radius: u32) -> Mask {
    let r2 = f64::from(radius * radius);
    let dist = squared_distance_to_background(mask);
    Mask { width: mask.width, height: mask.height, data: dist.iter().map(|&d| d > r2).collect() }
}

pub fn dilate(mask: &Mask, radius: u32) -> Mask {
    let r2 = f64::from(radius * radius);
    let dist = squared_distance(mask, true, false);
    Mask { width: mask.width, height: mask.height, data: dist.iter().map(|&d| d <= r2).collect() }
}

/// Erosion followed by dilation with the same disk.
pub fn open(mask: &Mask, radius: u32) -> Mask {
    dilate(&erode(mask, radius), radius)
}
