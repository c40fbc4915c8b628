//! Demosaicing-trace absence on an RGGB Bayer layout.
//!
//! Green is acquired where `x + y` is odd and bilinearly interpolated
//! elsewhere, so a demosaiced image has almost no bilinear prediction
//! residual at the interpolated sites. Per window, the ratio of residual
//! variance at interpolated sites to that at acquired sites stays near zero
//! where the trace survives and rises towards one where it is missing.

use serde::{Deserialize, Serialize};

use crate::heatmap::RawGrid;
use crate::image_io::ImageBuffer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cfa1Params {
    /// Analysis window side in pixels (a multiple of 8).
    pub window: usize,
    /// Added to the acquired-site variance; keeps flat regions from dominating.
    pub floor: f64,
}

impl Default for Cfa1Params {
    fn default() -> Self {
        Self { window: 16, floor: 1.0 }
    }
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    sum: f64,
    sq: f64,
}

impl Moments {
    fn add(&mut self, v: f64) {
        self.n += 1.0;
        self.sum += v;
        self.sq += v * v;
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sq += o.sq;
    }

    fn variance(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        let m = self.sum / self.n;
        (self.sq / self.n - m * m).max(0.0)
    }
}

pub(super) fn run(params: &Cfa1Params, img: &ImageBuffer) -> RawGrid {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let g = img.channel(1);
    let (cw, ch) = (w.div_ceil(8), h.div_ceil(8));
    // [interpolated, acquired] residual moments per 8x8 cell
    let mut cells = vec![[Moments::default(); 2]; cw * ch];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let pred = 0.25 * (g[y * w + x - 1] + g[y * w + x + 1] + g[(y - 1) * w + x] + g[(y + 1) * w + x]);
            let r = g[y * w + x] - pred;
            let acquired = (x + y) % 2 == 1;
            cells[(y / 8) * cw + x / 8][usize::from(acquired)].add(r);
        }
    }

    let n = (params.window / 8).max(1);
    let start = |c: usize, total: usize| if total <= n { 0 } else { c.saturating_sub((n - 1) / 2).min(total - n) };
    let mut values = Vec::with_capacity(cw * ch);
    for cy in 0..ch {
        let y0 = start(cy, ch);
        for cx in 0..cw {
            let x0 = start(cx, cw);
            let mut m = [Moments::default(); 2];
            for yy in y0..(y0 + n).min(ch) {
                for xx in x0..(x0 + n).min(cw) {
                    for k in 0..2 {
                        m[k].merge(&cells[yy * cw + xx][k]);
                    }
                }
            }
            let ratio = m[0].variance() / (m[1].variance() + params.floor);
            values.push(ratio.clamp(0.0, 2.0));
        }
    }
    RawGrid { width: cw, height: ch, values }
}
