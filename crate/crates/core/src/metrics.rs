//! Localization and detection metrics.

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<(usize, usize, usize, usize)> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", pred.dims(), gt.dims())));
    }
    let (mut tp, mut fp, mut fneg, mut tn) = (0, 0, 0, 0);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => tn += 1,
        }
    }
    Ok((tp, fp, fneg, tn))
}

/// `2TP / (2TP + FP + FN)`; 1 when both masks are empty.
pub fn pixel_f1(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (tp, fp, fneg, _) = confusion(pred, gt)?;
    let den = 2 * tp + fp + fneg;
    Ok(if den == 0 { 1.0 } else { (2 * tp) as f64 / den as f64 })
}

/// Mean IoU of the tampered and authentic classes; a class absent from both
/// masks has IoU 1.
pub fn miou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (tp, fp, fneg, tn) = confusion(pred, gt)?;
    let iou = |inter: usize, union: usize| if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    Ok(0.5 * (iou(tp, tp + fp + fneg) + iou(tn, tn + fp + fneg)))
}

/// Area under the ROC curve as the Mann-Whitney statistic: the probability
/// that a positive outscores a negative, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    // rank-sum with midranks for ties
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += order[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * mid;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Fraction of images whose `score > threshold` matches the label.
pub fn accuracy(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let hits = scores.iter().zip(labels).filter(|(s, l)| (**s > threshold) == **l).count();
    hits as f64 / scores.len() as f64
}
