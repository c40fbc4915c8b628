//! Local noise level from the diagonal Haar detail band (robust MAD estimate).

use serde::{Deserialize, Serialize};

use super::median;
use crate::heatmap::RawGrid;
use crate::image_io::ImageBuffer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Noi1Params {
    /// Block side in image pixels; must be even.
    pub block: usize,
}

impl Default for Noi1Params {
    fn default() -> Self {
        Self { block: 8 }
    }
}

/// One-level orthonormal Haar HH band of a plane: `(a - b - c + d) / 2` per
/// 2x2 cell. Odd trailing rows/columns are dropped.
pub fn haar_hh(plane: &[f64], width: usize, height: usize) -> (Vec<f64>, usize, usize) {
    let (hw, hh) = (width / 2, height / 2);
    let mut out = Vec::with_capacity(hw * hh);
    for y in 0..hh {
        for x in 0..hw {
            let a = plane[(2 * y) * width + 2 * x];
            let b = plane[(2 * y) * width + 2 * x + 1];
            let c = plane[(2 * y + 1) * width + 2 * x];
            let d = plane[(2 * y + 1) * width + 2 * x + 1];
            out.push((a - b - c + d) / 2.0);
        }
    }
    (out, hw, hh)
}

pub(super) fn run(params: &Noi1Params, img: &ImageBuffer) -> RawGrid {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (hh, hw, hhgt) = haar_hh(&img.luma(), w, h);
    let cell = (params.block / 2).max(1);
    let bw = hw.div_ceil(cell);
    let bh = hhgt.div_ceil(cell);
    let mut sigmas = Vec::with_capacity(bw * bh);
    let mut buf = Vec::with_capacity(cell * cell);
    for by in 0..bh {
        for bx in 0..bw {
            buf.clear();
            for y in by * cell..((by + 1) * cell).min(hhgt) {
                for x in bx * cell..((bx + 1) * cell).min(hw) {
                    buf.push(hh[y * hw + x].abs());
                }
            }
            sigmas.push(median(&mut buf) / 0.6745);
        }
    }
    let global = median(&mut sigmas.clone());
    let values = sigmas.iter().map(|s| (s - global).abs()).collect();
    RawGrid { width: bw, height: bh, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_of_checkerboard() {
        // +-1 checkerboard puts all energy into HH: (1 - (-1) - (-1) + 1) / 2 = 2
        let plane: Vec<f64> = (0..16).map(|i| if (i % 4 + i / 4) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (hh, w, h) = haar_hh(&plane, 4, 4);
        assert_eq!((w, h), (2, 2));
        assert!(hh.iter().all(|&v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn haar_kills_linear_ramps() {
        let plane: Vec<f64> = (0..64).map(|i| (i % 8) as f64 * 3.0 + (i / 8) as f64).collect();
        let (hh, _, _) = haar_hh(&plane, 8, 8);
        assert!(hh.iter().all(|v| v.abs() < 1e-12));
    }
}
