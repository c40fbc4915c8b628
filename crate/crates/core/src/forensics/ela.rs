//! Error level analysis: recompression residue at a fixed quality.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::heatmap::RawGrid;
use crate::image_io::{jpeg_roundtrip, ImageBuffer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElaParams {
    pub quality: u8,
    pub gain: f64,
    /// Side of the pooling tile applied to the per-pixel residue.
    pub pool: usize,
}

impl Default for ElaParams {
    fn default() -> Self {
        Self { quality: 90, gain: 10.0, pool: 8 }
    }
}

/// Per-pixel residue: mean absolute channel difference times `gain`,
/// clamped to the 8-bit range and scaled to `[0, 1]`.
pub fn ela_raw_pixels(params: &ElaParams, img: &ImageBuffer) -> Result<RawGrid> {
    let recompressed = jpeg_roundtrip(img, params.quality)?;
    let values = img
        .data()
        .chunks_exact(3)
        .zip(recompressed.data().chunks_exact(3))
        .map(|(a, b)| {
            let d: f64 = a
                .iter()
                .zip(b)
                .map(|(x, y)| (f64::from(*x) - f64::from(*y)).abs())
                .sum::<f64>()
                / 3.0;
            (d * params.gain).min(255.0) / 255.0
        })
        .collect();
    RawGrid::new(img.width() as usize, img.height() as usize, values)
}

pub(super) fn run(params: &ElaParams, img: &ImageBuffer) -> Result<RawGrid> {
    let px = ela_raw_pixels(params, img)?;
    Ok(if params.pool > 1 { px.block_mean(params.pool) } else { px })
}
