//! Per-pixel anomaly maps and the raw grids modules build them from.

use crate::error::{Error, Result};

/// Unnormalized module output.
#[derive(Clone, Debug, PartialEq)]
pub struct RawGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl RawGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} grid",
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0.0; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Bilinear resampling with pixel-center alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> RawGrid {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut out = Vec::with_capacity(width * height);
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
                let bot = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
                out.push(top * (1.0 - ty) + bot * ty);
            }
        }
        RawGrid { width, height, values: out }
    }

    /// Mean over non-overlapping `block`x`block` tiles (partial edge tiles included).
    pub fn block_mean(&self, block: usize) -> RawGrid {
        let bw = self.width.div_ceil(block);
        let bh = self.height.div_ceil(block);
        let mut sums = vec![0.0; bw * bh];
        let mut counts = vec![0usize; bw * bh];
        for y in 0..self.height {
            for x in 0..self.width {
                let i = (y / block) * bw + x / block;
                sums[i] += self.get(x, y);
                counts[i] += 1;
            }
        }
        let values = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
        RawGrid { width: bw, height: bh, values }
    }
}

/// Normalized heatmap: every value finite and in `[0, 1]`.
///
/// Stored at 32-bit precision so cached and freshly computed maps agree bit
/// for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl Heatmap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} heatmap",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0.0; width * height] }
    }

    pub fn constant(width: usize, height: usize, v: f32) -> Self {
        Self { width, height, values: vec![v.clamp(0.0, 1.0); width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v)).sum::<f64>() / self.values.len().max(1) as f64
    }

    /// Bilinear resize (values stay in `[0, 1]` since interpolation is convex).
    pub fn resize(&self, width: usize, height: usize) -> Heatmap {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let raw = RawGrid {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f64::from(v)).collect(),
        };
        let r = raw.resize_bilinear(width, height);
        Heatmap {
            width,
            height,
            values: r.values.iter().map(|&v| (v as f32).clamp(0.0, 1.0)).collect(),
        }
    }

    /// 8-bit grayscale rendering, 0 -> black, 1 -> white.
    pub fn to_gray_u8(&self) -> Vec<u8> {
        self.values.iter().map(|&v| (v * 255.0).round() as u8).collect()
    }
}

/// Min-max normalization; a flat grid (range below 1e-12) maps to all zeros.
pub fn normalize_heatmap(raw: &RawGrid) -> Result<Heatmap> {
    if raw.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if raw.values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (lo, hi) = raw
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    let values = if range < 1e-12 {
        vec![0.0; raw.values.len()]
    } else {
        raw.values
            .iter()
            .map(|&v| (((v - lo) / range) as f32).clamp(0.0, 1.0))
            .collect()
    };
    Ok(Heatmap { width: raw.width, height: raw.height, values })
}
