//! Blocking-artifact inconsistency in the DCT domain.
//!
//! For each low-frequency AC coefficient the dominant lattice spacing of its
//! histogram is estimated over the whole image (for a double-compressed file
//! this is the primary quantization step, otherwise the file's own step).
//! A block's raw score is its mean normalized distance from those lattices:
//! regions that do not share the image's compression history stand out.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::dequantized_luma;
use crate::heatmap::RawGrid;
use crate::image_io::JpegCoefficients;
use frame_jpeg::ZIGZAG;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DctParams {
    /// Number of AC frequencies (zig-zag order, starting at 1).
    pub frequencies: usize,
    /// Largest lattice spacing considered.
    pub max_step: u16,
    /// Minimum periodicity strength for accepting a coarser spacing.
    pub min_strength: f64,
}

impl Default for DctParams {
    fn default() -> Self {
        Self { frequencies: 9, max_step: 64, min_strength: 0.4 }
    }
}

/// Periodicity strength of nonzero values at spacing `step`: the mean of
/// `cos(2 pi v / step)`, which is 1 when every value sits on the lattice.
fn strength(values: &[f64], step: f64) -> f64 {
    let n = values.len().max(1) as f64;
    values.iter().map(|v| (2.0 * PI * v / step).cos()).sum::<f64>() / n
}

/// Estimated lattice spacing of one frequency's coefficient values.
pub(super) fn estimate_step(values: &[f64], file_step: u16, params: &DctParams) -> f64 {
    let nonzero: Vec<f64> = values.iter().copied().filter(|v| v.abs() > 0.5).collect();
    let fs = f64::from(file_step);
    if nonzero.len() < 16 {
        return fs;
    }
    // Lattice sub-multiples fit as well as the true spacing, so take the
    // coarsest spacing whose strength is within 0.05 of the best.
    // Only values at least half a spacing away from zero are informative at
    // that spacing; small values fit any coarse lattice.
    let strengths: Vec<(f64, f64)> = ((file_step + 1)..=params.max_step.max(file_step + 1))
        .filter_map(|s| {
            let s = f64::from(s);
            let far: Vec<f64> = nonzero.iter().copied().filter(|v| v.abs() >= 0.5 * s).collect();
            (far.len() >= 16).then(|| (s, strength(&far, s)))
        })
        .collect();
    let best = strengths.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if best < params.min_strength {
        return fs;
    }
    strengths
        .iter()
        .rev()
        .find(|p| p.1 >= best - 0.05)
        .map_or(fs, |p| p.0)
}

pub(super) fn run(params: &DctParams, coefs: &JpegCoefficients) -> RawGrid {
    let (bw, bh, blocks) = dequantized_luma(coefs);
    let qt = &coefs.luma().quant_table;
    let freqs: Vec<usize> = ZIGZAG[1..=params.frequencies.min(63)].to_vec();
    let steps: Vec<f64> = freqs
        .iter()
        .map(|&f| {
            let vals: Vec<f64> = blocks.iter().map(|b| b[f]).collect();
            estimate_step(&vals, qt[f], params)
        })
        .collect();
    let values = blocks
        .iter()
        .map(|b| {
            freqs
                .iter()
                .zip(&steps)
                .map(|(&f, &s)| {
                    let v = b[f];
                    (v - s * (v / s).round()).abs() / s
                })
                .sum::<f64>()
                / freqs.len() as f64
        })
        .collect();
    RawGrid { width: bw, height: bh, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_primary_step() {
        // values quantized at 7 then requantized at 2
        let vals: Vec<f64> = (-20..=20)
            .filter(|m| *m != 0)
            .flat_map(|m| {
                let v = f64::from(m) * 7.0;
                let r = (v / 2.0).round() * 2.0;
                std::iter::repeat_n(r, 3)
            })
            .collect();
        let s = estimate_step(&vals, 2, &DctParams::default());
        assert_eq!(s, 7.0);
    }

    #[test]
    fn falls_back_to_file_step_without_periodicity() {
        let vals: Vec<f64> = (-60..=60).map(|m| f64::from(m) * 2.0).collect();
        let s = estimate_step(&vals, 2, &DctParams::default());
        assert_eq!(s, 2.0);
    }
}
