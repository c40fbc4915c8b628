//! Aligned double quantization.
//!
//! A coefficient histogram of a double-quantized JPEG is periodic. Per
//! frequency, each block's coefficient is scored by how strongly its bin is
//! favoured relative to the bins of the surrounding period (periodic
//! likelihood) against a flat within-period likelihood; the summed
//! log-likelihood ratios give a per-block posterior of double quantization.

use serde::{Deserialize, Serialize};

use super::dct::{estimate_step, DctParams};
use crate::heatmap::RawGrid;
use crate::image_io::JpegCoefficients;
use frame_jpeg::ZIGZAG;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adq1Params {
    /// AC frequencies used (zig-zag order, starting at 1).
    pub frequencies: usize,
    /// Histogram half-width in quantized units.
    pub max_bin: i32,
}

impl Default for Adq1Params {
    fn default() -> Self {
        Self { frequencies: 6, max_bin: 64 }
    }
}

struct FrequencyModel {
    freq: usize,
    /// Period in quantized-bin units; `None` when the histogram is not periodic.
    period: Option<f64>,
    hist: Vec<f64>,
    max_bin: i32,
}

impl FrequencyModel {
    fn bin(&self, k: i32) -> f64 {
        let k = k.clamp(-self.max_bin, self.max_bin);
        self.hist[(k + self.max_bin) as usize]
    }

    /// `ln(P_periodic(k) / P_flat(k))` for a coefficient in bin `k`.
    fn log_ratio(&self, k: i32) -> f64 {
        let Some(p) = self.period else { return 0.0 };
        let half = p / 2.0;
        let lo = (f64::from(k) - half).ceil() as i32;
        let hi = (f64::from(k) + half - 1e-9).floor() as i32;
        let n = (hi - lo + 1).max(1);
        let window: f64 = (lo..=hi).map(|j| self.bin(j)).sum();
        // additive smoothing keeps empty bins finite
        let smooth = 0.5;
        let p_periodic = (self.bin(k) + smooth) / (window + smooth * f64::from(n));
        let p_flat = 1.0 / f64::from(n);
        (p_periodic / p_flat).ln()
    }
}

pub(super) fn run(params: &Adq1Params, coefs: &JpegCoefficients) -> RawGrid {
    let luma = coefs.luma();
    let bw = (coefs.width as usize).div_ceil(8).min(luma.blocks_wide);
    let bh = (coefs.height as usize).div_ceil(8).min(luma.blocks_high);
    let blocks: Vec<&[i16; 64]> = (0..bh)
        .flat_map(|by| (0..bw).map(move |bx| (bx, by)))
        .map(|(bx, by)| luma.block(bx, by))
        .collect();
    let step_params = DctParams::default();

    let models: Vec<FrequencyModel> = ZIGZAG[1..=params.frequencies.min(63)]
        .iter()
        .map(|&f| {
            let q = luma.quant_table[f];
            let mut hist = vec![0.0; (2 * params.max_bin + 1) as usize];
            for b in &blocks {
                let k = i32::from(b[f]).clamp(-params.max_bin, params.max_bin);
                hist[(k + params.max_bin) as usize] += 1.0;
            }
            let values: Vec<f64> = blocks.iter().map(|b| f64::from(b[f]) * f64::from(q)).collect();
            let primary = estimate_step(&values, q, &step_params);
            let period = primary / f64::from(q);
            FrequencyModel {
                freq: f,
                period: (period >= 1.5).then_some(period),
                hist,
                max_bin: params.max_bin,
            }
        })
        .collect();

    let values = blocks
        .iter()
        .map(|b| {
            let llr: f64 = models.iter().map(|m| m.log_ratio(i32::from(b[m.freq]))).sum();
            1.0 / (1.0 + (-llr).exp())
        })
        .collect();
    RawGrid { width: bw, height: bh, values }
}
