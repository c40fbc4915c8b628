//! Block-artifact grid consistency.
//!
//! JPEG blocking leaves a periodic discontinuity every 8 pixels. For each
//! phase of that period the second difference of neighbouring first
//! differences is accumulated; a window whose strongest phase disagrees with
//! the image-wide phase carries a grid that does not belong to the host.

use serde::{Deserialize, Serialize};

use crate::heatmap::RawGrid;
use crate::image_io::ImageBuffer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlkParams {
    /// Analysis window side in pixels (a multiple of 8).
    pub window: usize,
}

impl Default for BlkParams {
    fn default() -> Self {
        Self { window: 32 }
    }
}

type PhaseEnergy = [[f64; 8]; 2];

/// Boundary strength between samples `b` and `c` of the run `a b c d`.
fn boundary(a: f64, b: f64, c: f64, d: f64) -> f64 {
    (2.0 * (c - b) - (b - a) - (d - c)).abs()
}

/// Per 8x8 cell, the boundary energy for each horizontal and vertical phase.
fn cell_energies(luma: &[f64], w: usize, h: usize) -> (usize, usize, Vec<PhaseEnergy>) {
    let (cw, ch) = (w.div_ceil(8), h.div_ceil(8));
    let mut cells = vec![[[0.0; 8]; 2]; cw * ch];
    let at = |x: usize, y: usize| luma[y * w + x];
    for y in 0..h {
        for x in 0..w {
            let cell = &mut cells[(y / 8) * cw + x / 8];
            if x >= 1 && x + 2 < w {
                cell[0][x % 8] += boundary(at(x - 1, y), at(x, y), at(x + 1, y), at(x + 2, y));
            }
            if y >= 1 && y + 2 < h {
                cell[1][y % 8] += boundary(at(x, y - 1), at(x, y), at(x, y + 1), at(x, y + 2));
            }
        }
    }
    (cw, ch, cells)
}

fn argmax(e: &[f64; 8]) -> usize {
    // first maximum wins so ties resolve deterministically
    (0..8).fold(0, |best, i| if e[i] > e[best] { i } else { best })
}

/// Start of a run of `n` cells roughly centred on cell `c`, kept inside `[0, total)`.
fn window_start(c: usize, n: usize, total: usize) -> usize {
    if total <= n {
        0
    } else {
        c.saturating_sub((n - 1) / 2).min(total - n)
    }
}

pub(super) fn run(params: &BlkParams, img: &ImageBuffer) -> RawGrid {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (cw, ch, cells) = cell_energies(&img.luma(), w, h);

    let mut global: PhaseEnergy = [[0.0; 8]; 2];
    for c in &cells {
        for d in 0..2 {
            for p in 0..8 {
                global[d][p] += c[d][p];
            }
        }
    }
    let global_phase = [argmax(&global[0]), argmax(&global[1])];

    let n = (params.window / 8).max(1);
    let mut values = Vec::with_capacity(cw * ch);
    for cy in 0..ch {
        let y0 = window_start(cy, n, ch);
        for cx in 0..cw {
            let x0 = window_start(cx, n, cw);
            let mut local: PhaseEnergy = [[0.0; 8]; 2];
            for yy in y0..(y0 + n).min(ch) {
                for xx in x0..(x0 + n).min(cw) {
                    let c = &cells[yy * cw + xx];
                    for d in 0..2 {
                        for p in 0..8 {
                            local[d][p] += c[d][p];
                        }
                    }
                }
            }
            let score: f64 = (0..2)
                .map(|d| {
                    let e = &local[d];
                    let mean = e.iter().sum::<f64>() / 8.0;
                    (e[argmax(e)] - e[global_phase[d]]) / (mean + 1e-6)
                })
                .sum();
            values.push(score);
        }
    }
    RawGrid { width: cw, height: ch, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::SourceFormat;

    fn blocky(w: usize, h: usize, shift: impl Fn(usize, usize) -> usize) -> ImageBuffer {
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                let s = shift(x, y);
                let bx = (x + s) / 8;
                let by = (y + s) / 8;
                let v = (40 + ((bx * 37 + by * 91) % 7) * 25) as u8;
                data.extend([v, v, v]);
            }
        }
        ImageBuffer::new(w as u32, h as u32, data, SourceFormat::Png).unwrap()
    }

    #[test]
    fn aligned_grid_scores_zero() {
        let img = blocky(64, 64, |_, _| 0);
        let g = run(&BlkParams::default(), &img);
        assert!(g.values.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn shifted_patch_scores_above_host() {
        // top-left quadrant's grid is offset by 3 pixels
        let img = blocky(96, 96, |x, y| if x < 40 && y < 40 { 3 } else { 0 });
        let g = run(&BlkParams::default(), &img);
        let inside = g.get(1, 1);
        let outside = g.get(10, 10);
        assert!(inside > outside + 0.5, "{inside} vs {outside}");
    }
}
