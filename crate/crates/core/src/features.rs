//! Image context: hand-crafted image features plus the manipulation-type one-hot.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::{ImageBuffer, SourceFormat};

pub const FEATURE_DIM: usize = 9;
pub const MANIP_DIM: usize = 5;
/// Hysteresis thresholds of the edge detector.
pub const CANNY_LOW: f64 = 100.0;
pub const CANNY_HIGH: f64 = 200.0;

/// Suspected manipulation family, in one-hot order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManipType {
    Splicing,
    CopyMove,
    Removal,
    Other,
    #[default]
    Unknown,
}

impl ManipType {
    pub const ALL: [ManipType; MANIP_DIM] =
        [ManipType::Splicing, ManipType::CopyMove, ManipType::Removal, ManipType::Other, ManipType::Unknown];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ManipType::Splicing => "splicing",
            ManipType::CopyMove => "copy_move",
            ManipType::Removal => "removal",
            ManipType::Other => "other",
            ManipType::Unknown => "unknown",
        }
    }
}

impl fmt::Display for ManipType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ManipType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        ManipType::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown manipulation type {s:?}")))
    }
}

pub fn manipulation_onehot(m: ManipType) -> [f64; MANIP_DIM] {
    let mut v = [0.0; MANIP_DIM];
    v[m.index()] = 1.0;
    v
}

/// Per-image selector input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub image_features: [f64; FEATURE_DIM],
    pub manip_onehot: [f64; MANIP_DIM],
    pub image_id: String,
}

impl Context {
    pub fn new(img: &ImageBuffer, manip: ManipType, image_id: impl Into<String>) -> Self {
        Self {
            image_features: extract_features(img, img.source_format()),
            manip_onehot: manipulation_onehot(manip),
            image_id: image_id.into(),
        }
    }

    /// Features followed by the one-hot.
    pub fn vector(&self) -> [f64; FEATURE_DIM + MANIP_DIM] {
        let mut v = [0.0; FEATURE_DIM + MANIP_DIM];
        v[..FEATURE_DIM].copy_from_slice(&self.image_features);
        v[FEATURE_DIM..].copy_from_slice(&self.manip_onehot);
        v
    }
}

/// `[log(1+H), log(1+W), mean/255, std/255, entropy/8, edge density,
/// saturation ratio, is_jpeg, is_png]` over the 8-bit BT.601 gray image.
pub fn extract_features(img: &ImageBuffer, format: SourceFormat) -> [f64; FEATURE_DIM] {
    let gray = img.gray_u8();
    let n = gray.len() as f64;
    let mut hist = [0u64; 256];
    for &g in &gray {
        hist[g as usize] += 1;
    }
    let mean = gray.iter().map(|&g| f64::from(g)).sum::<f64>() / n;
    let var = gray.iter().map(|&g| (f64::from(g) - mean).powi(2)).sum::<f64>() / n;
    let entropy: f64 = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    let saturated = hist[..=2].iter().chain(&hist[253..]).sum::<u64>() as f64;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let edges = canny(&gray, w, h, CANNY_LOW, CANNY_HIGH);
    let edge_density = edges.iter().filter(|&&e| e).count() as f64 / n;
    [
        (1.0 + h as f64).ln(),
        (1.0 + w as f64).ln(),
        mean / 255.0,
        var.sqrt() / 255.0,
        entropy / 8.0,
        edge_density,
        saturated / n,
        f64::from(u8::from(format == SourceFormat::Jpeg)),
        f64::from(u8::from(format == SourceFormat::Png)),
    ]
}

fn gaussian_kernel_5(sigma: f64) -> [f64; 5] {
    let mut k = [0.0; 5];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - 2.0;
        *v = (-d * d / (2.0 * sigma * sigma)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable convolution with edge replication.
fn convolve_separable(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let clampi = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * src[y * w + clampi(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[clampi(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Canny edge map: 5x5 Gaussian (sigma 1.4), Sobel gradients, non-maximum
/// suppression along four directions, and 8-connected hysteresis on the
/// gradient magnitude.
pub fn canny(gray: &[u8], w: usize, h: usize, low: f64, high: f64) -> Vec<bool> {
    let src: Vec<f64> = gray.iter().map(|&g| f64::from(g)).collect();
    let blur = convolve_separable(&src, w, h, &gaussian_kernel_5(1.4));
    let at = |x: isize, y: isize| blur[(y.clamp(0, h as isize - 1) as usize) * w + x.clamp(0, w as isize - 1) as usize];

    let mut mag = vec![0.0; w * h];
    let mut dir = vec![0u8; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            mag[i] = gx.hypot(gy);
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            dir[i] = if !(22.5..157.5).contains(&angle) {
                0
            } else if angle < 67.5 {
                1
            } else if angle < 112.5 {
                2
            } else {
                3
            };
        }
    }

    let m = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    // 0: edge normal along x, 1: along the main diagonal (y grows with x),
    // 2: along y, 3: along the anti-diagonal
    let mut thin = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let (a, b) = match dir[i] {
                0 => (m(x - 1, y), m(x + 1, y)),
                1 => (m(x - 1, y - 1), m(x + 1, y + 1)),
                2 => (m(x, y - 1), m(x, y + 1)),
                _ => (m(x + 1, y - 1), m(x - 1, y + 1)),
            };
            if mag[i] >= a && mag[i] >= b {
                thin[i] = mag[i];
            }
        }
    }

    let mut edges = vec![false; w * h];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (i, &v) in thin.iter().enumerate() {
        if v >= high {
            edges[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edges[j] && thin[j] >= low {
                    edges[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    edges
}
