//! Top-k selection and score-softmax fusion with learned per-rank biases.

use serde::{Deserialize, Serialize};

use crate::cache::{Checkpoint, Tensor};
use crate::error::{Error, Result};
use crate::heatmap::Heatmap;
use crate::mask::BinaryMask;
use crate::selector::Adam;

pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const LOCALIZE_THRESHOLD: f32 = 0.5;
pub const DICE_EPS: f64 = 1e-6;
const BCE_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub rank_biases: Vec<f64>,
    pub temperature: f64,
}

impl FusionParams {
    pub fn zeros(k: usize) -> Self {
        Self { rank_biases: vec![0.0; k], temperature: DEFAULT_TEMPERATURE }
    }

    pub fn k(&self) -> usize {
        self.rank_biases.len()
    }

    /// `softmax((score_i + bias_i) / temperature)` over the first
    /// `scores.len()` ranks.
    pub fn weights(&self, scores: &[f64]) -> Result<Vec<f64>> {
        if scores.len() > self.rank_biases.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} scores for {} rank biases",
                scores.len(),
                self.rank_biases.len()
            )));
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        let logits: Vec<f64> = scores.iter().zip(&self.rank_biases).map(|(s, b)| (s + b) / self.temperature).collect();
        Ok(softmax(&logits))
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        vec![
            Tensor::new("fusion.rank_biases", vec![self.rank_biases.len()], self.rank_biases.clone()),
            Tensor::new("fusion.temperature", vec![1], vec![self.temperature]),
        ]
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let b = ck.tensor("fusion.rank_biases").ok_or_else(|| Error::MissingModel("fusion.rank_biases".into()))?;
        let t = ck.tensor("fusion.temperature").ok_or_else(|| Error::MissingModel("fusion.temperature".into()))?;
        Ok(Self { rank_biases: b.values.clone(), temperature: t.values[0] })
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// First `k` indices of a descending ranking.
pub fn select_topk(ranked: &[(usize, f64)], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if ranked.len() < k {
        return Err(Error::NotEnoughCandidates { needed: k, available: ranked.len() });
    }
    Ok(ranked[..k].iter().map(|r| r.0).collect())
}

/// Convex combination of equally sized maps.
pub fn weighted_sum(maps: &[&Heatmap], weights: &[f64]) -> Result<Heatmap> {
    let first = maps.first().ok_or(Error::EmptyInput)?;
    let (w, h) = first.dims();
    if maps.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!("{} maps, {} weights", maps.len(), weights.len())));
    }
    if let Some(bad) = maps.iter().find(|m| m.dims() != (w, h)) {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", bad.dims(), (w, h))));
    }
    let values = (0..w * h)
        .map(|i| {
            let v: f64 = maps.iter().zip(weights).map(|(m, wt)| wt * f64::from(m.values()[i])).sum();
            v.clamp(0.0, 1.0) as f32
        })
        .collect();
    Heatmap::new(w, h, values)
}

/// Fuses the selected maps (in rank order) with score-softmax weights.
pub fn fuse(maps: &[&Heatmap], scores: &[f64], fp: &FusionParams) -> Result<Heatmap> {
    if maps.len() != scores.len() {
        return Err(Error::DimensionMismatch(format!("{} maps, {} scores", maps.len(), scores.len())));
    }
    weighted_sum(maps, &fp.weights(scores)?)
}

pub fn detection_score(fused: &Heatmap) -> f64 {
    f64::from(fused.max())
}

/// Strictly above 0.5 is tampered.
pub fn localize(fused: &Heatmap) -> BinaryMask {
    let (w, h) = fused.dims();
    let data = fused.values().iter().map(|&v| v > LOCALIZE_THRESHOLD).collect();
    BinaryMask::new(w, h, data).expect("same dimensions")
}

/// Mean BCE plus soft-Dice loss, both with unit weight.
pub fn bce_dice_loss(pred: &Heatmap, gt: &BinaryMask) -> Result<f64> {
    let values: Vec<f64> = pred.values().iter().map(|&v| f64::from(v)).collect();
    bce_dice_values(&values, pred.dims(), gt).map(|(l, _)| l)
}

/// Loss and its gradient with respect to each predicted value.
fn bce_dice_values(pred: &[f64], dims: (usize, usize), gt: &BinaryMask) -> Result<(f64, Vec<f64>)> {
    if dims != gt.dims() {
        return Err(Error::DimensionMismatch(format!("{dims:?} vs {:?}", gt.dims())));
    }
    let n = pred.len() as f64;
    let mut bce = 0.0;
    let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.iter().zip(gt.data()) {
        let pc = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let y = f64::from(u8::from(g));
        bce -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        inter += p * y;
        sp += p;
        sg += y;
    }
    bce /= n;
    let num = 2.0 * inter + DICE_EPS;
    let den = sp + sg + DICE_EPS;
    let dice = 1.0 - num / den;
    let grad = pred
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| {
            let y = f64::from(u8::from(g));
            let g_bce = if p > BCE_CLAMP && p < 1.0 - BCE_CLAMP { (p - y) / (p * (1.0 - p)) / n } else { 0.0 };
            let g_dice = -(2.0 * y * den - num) / (den * den);
            g_bce + g_dice
        })
        .collect();
    Ok((bce + dice, grad))
}

/// One training example: the ranked path maps of an image, their selector
/// scores, and the ground truth.
#[derive(Clone, Debug)]
pub struct FusionSample {
    pub maps: Vec<Heatmap>,
    pub scores: Vec<f64>,
    pub mask: BinaryMask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionTrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Samples per optimizer step.
    pub batch_size: usize,
    /// Longest side used during training; larger samples are downsampled.
    pub max_side: usize,
}

impl Default for FusionTrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-2, weight_decay: 1e-4, epochs: 10, batch_size: 16, max_side: 384 }
    }
}

/// Bilinear downsampling so the longer side is at most `max_side`.
pub fn downsample_sample(s: &FusionSample, max_side: usize) -> FusionSample {
    let (w, h) = s.mask.dims();
    let side = w.max(h);
    if side <= max_side {
        return s.clone();
    }
    let f = max_side as f64 / side as f64;
    let (nw, nh) = (((w as f64 * f).round() as usize).max(1), ((h as f64 * f).round() as usize).max(1));
    FusionSample {
        maps: s.maps.iter().map(|m| m.resize(nw, nh)).collect(),
        scores: s.scores.clone(),
        mask: s.mask.resize_nearest(nw, nh),
    }
}

/// Learns the rank biases with Adam on the mean BCE+Dice loss, taking
/// mini-batches in the samples' given order. Samples with empty masks are
/// skipped.
pub fn train_fusion(samples: &[FusionSample], k: usize, cfg: &FusionTrainConfig) -> Result<FusionParams> {
    let usable: Vec<FusionSample> = samples
        .iter()
        .filter(|s| !s.mask.is_empty())
        .map(|s| downsample_sample(s, cfg.max_side))
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(s) = usable.iter().find(|s| s.maps.len() != k || s.scores.len() != k) {
        return Err(Error::DimensionMismatch(format!("sample has {} maps for k = {k}", s.maps.len())));
    }
    let mut fp = FusionParams::zeros(k);
    let mut adam = Adam::new(k, cfg.learning_rate, cfg.weight_decay, 0.9, 0.999, 1e-8);
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for batch in usable.chunks(cfg.batch_size.max(1)) {
            let (loss, grad) = fusion_loss_grad(batch, &fp)?;
            epoch_loss += loss * batch.len() as f64;
            adam.step(&mut fp.rank_biases, &grad);
        }
        log::debug!("fusion epoch {epoch}: loss {:.6}", epoch_loss / usable.len() as f64);
    }
    Ok(fp)
}

/// Mean loss over samples and its gradient with respect to the rank biases.
pub fn fusion_loss_grad(samples: &[FusionSample], fp: &FusionParams) -> Result<(f64, Vec<f64>)> {
    let k = fp.k();
    let mut total = 0.0;
    let mut grad = vec![0.0; k];
    for s in samples {
        let w = fp.weights(&s.scores)?;
        let dims = s.mask.dims();
        let n = dims.0 * dims.1;
        let fused: Vec<f64> = (0..n)
            .map(|i| s.maps.iter().zip(&w).map(|(m, wt)| wt * f64::from(m.values()[i])).sum())
            .collect();
        let (loss, g_pix) = bce_dice_values(&fused, dims, &s.mask)?;
        total += loss;
        // dL/dw_j = sum_i g_i * map_j(i); softmax Jacobian maps it to logits
        let g_w: Vec<f64> = s
            .maps
            .iter()
            .map(|m| g_pix.iter().zip(m.values()).map(|(g, v)| g * f64::from(*v)).sum())
            .collect();
        let dot: f64 = g_w.iter().zip(&w).map(|(a, b)| a * b).sum();
        for j in 0..k {
            grad[j] += w[j] * (g_w[j] - dot) / fp.temperature;
        }
    }
    let inv = 1.0 / samples.len() as f64;
    Ok((total * inv, grad.iter().map(|g| g * inv).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topk_and_ties() {
        let ranked = crate::selector::rank_scores(&[0.9, 0.1, 0.8]);
        assert_eq!(select_topk(&ranked, 2).unwrap(), vec![0, 2]);
        let tied = crate::selector::rank_scores(&[0.5, 0.5, 0.5]);
        assert_eq!(select_topk(&tied, 2).unwrap(), vec![0, 1]);
        assert!(matches!(select_topk(&tied, 4), Err(Error::NotEnoughCandidates { needed: 4, available: 3 })));
    }

    #[test]
    fn softmax_weights() {
        let fp = FusionParams::zeros(2);
        let w = fp.weights(&[1.0, 0.0]).unwrap();
        let e = std::f64::consts::E;
        assert!((w[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((w[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
        let u = FusionParams::zeros(5).weights(&[0.3; 5]).unwrap();
        assert!(u.iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn identical_maps_survive_fusion() {
        let m = Heatmap::new(2, 1, vec![0.25, 0.75]).unwrap();
        let out = fuse(&[&m, &m, &m], &[0.9, 0.1, 0.4], &FusionParams::zeros(3)).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn localize_is_strict() {
        assert!(localize(&Heatmap::constant(3, 3, 0.5)).is_empty());
        let m = Heatmap::new(2, 1, vec![0.49, 0.51]).unwrap();
        assert_eq!(localize(&m).data(), &[false, true]);
        assert_eq!(localize(&Heatmap::constant(2, 2, 1.0)).count(), 4);
    }

    #[test]
    fn loss_values() {
        let ones = BinaryMask::new(2, 2, vec![true; 4]).unwrap();
        let perfect = bce_dice_loss(&Heatmap::constant(2, 2, 1.0), &ones).unwrap();
        assert!(perfect < 1e-6);
        let half = bce_dice_loss(&Heatmap::constant(2, 2, 0.5), &ones).unwrap();
        let expected = 2f64.ln() + 1.0 - (4.0 + 1e-6) / (6.0 + 1e-6);
        assert!((half - expected).abs() < 1e-12);
        let zeros = BinaryMask::empty(2, 2);
        assert!(bce_dice_loss(&Heatmap::zeros(2, 2), &zeros).unwrap() < 1e-6);
    }

    #[test]
    fn bias_gradient_matches_finite_differences() {
        let mask = BinaryMask::new(3, 1, vec![true, false, false]).unwrap();
        let s = FusionSample {
            maps: vec![
                Heatmap::new(3, 1, vec![0.9, 0.2, 0.1]).unwrap(),
                Heatmap::new(3, 1, vec![0.3, 0.6, 0.5]).unwrap(),
            ],
            scores: vec![0.7, 0.4],
            mask,
        };
        let mut fp = FusionParams { rank_biases: vec![0.1, -0.2], temperature: 1.0 };
        let (_, g) = fusion_loss_grad(std::slice::from_ref(&s), &fp).unwrap();
        for j in 0..2 {
            let h = 1e-6;
            fp.rank_biases[j] += h;
            let lp = fusion_loss_grad(std::slice::from_ref(&s), &fp).unwrap().0;
            fp.rank_biases[j] -= 2.0 * h;
            let lm = fusion_loss_grad(std::slice::from_ref(&s), &fp).unwrap().0;
            fp.rank_biases[j] += h;
            assert!(((lp - lm) / (2.0 * h) - g[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_epochs_keep_zero_biases() {
        let s = FusionSample {
            maps: vec![Heatmap::constant(2, 2, 0.3)],
            scores: vec![0.5],
            mask: BinaryMask::new(2, 2, vec![true, false, false, false]).unwrap(),
        };
        let cfg = FusionTrainConfig { epochs: 0, ..Default::default() };
        assert_eq!(train_fusion(&[s], 1, &cfg).unwrap(), FusionParams::zeros(1));
    }
}
