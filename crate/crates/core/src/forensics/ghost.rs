//! JPEG ghost: a region previously compressed at quality q shows a
//! pronounced dip in recompression difference when re-saved near q.
//!
//! Each block's difference curve is first divided by its own sum over the
//! quality grid, which removes the dependence on how much texture the block
//! holds and leaves only the curve's shape. The per-quality maps are then
//! min-max normalized across blocks and a block scores the range of its
//! normalized curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::RawGrid;
use crate::image_io::{jpeg_roundtrip, ImageBuffer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhostParams {
    pub qualities: Vec<u8>,
    pub block: usize,
}

impl Default for GhostParams {
    fn default() -> Self {
        Self { qualities: (50..=100).step_by(5).collect(), block: 16 }
    }
}

/// Per-block mean squared difference (over pixels and channels).
fn block_mse(a: &ImageBuffer, b: &ImageBuffer, block: usize) -> RawGrid {
    let (w, h) = (a.width() as usize, a.height() as usize);
    let sq = a
        .data()
        .chunks_exact(3)
        .zip(b.data().chunks_exact(3))
        .map(|(p, q)| {
            p.iter()
                .zip(q)
                .map(|(x, y)| {
                    let d = f64::from(*x) - f64::from(*y);
                    d * d
                })
                .sum::<f64>()
                / 3.0
        })
        .collect();
    RawGrid { width: w, height: h, values: sq }.block_mean(block)
}

fn minmax_in_place(values: &mut [f64]) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    for v in values.iter_mut() {
        *v = if range < 1e-12 { 0.0 } else { (*v - lo) / range };
    }
}

pub(super) fn run(params: &GhostParams, img: &ImageBuffer) -> Result<RawGrid> {
    if params.qualities.is_empty() {
        return Err(Error::InvalidArgument("GHOST needs at least one quality".into()));
    }
    let mut curves: Vec<RawGrid> = Vec::with_capacity(params.qualities.len());
    for &q in &params.qualities {
        let re = jpeg_roundtrip(img, q)?;
        curves.push(block_mse(img, &re, params.block));
    }
    for i in 0..curves[0].values.len() {
        let total: f64 = curves.iter().map(|c| c.values[i]).sum::<f64>() + 1e-9;
        for c in curves.iter_mut() {
            c.values[i] /= total;
        }
    }
    for c in curves.iter_mut() {
        minmax_in_place(&mut c.values);
    }
    let first = &curves[0];
    let mut out = RawGrid::zeros(first.width, first.height);
    for (i, v) in out.values.iter_mut().enumerate() {
        let (lo, hi) = curves
            .iter()
            .map(|c| c.values[i])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        *v = hi - lo;
    }
    Ok(out)
}
