use frame_core::fusion::{
    bce_dice_loss, fuse, localize, select_topk, softmax, train_fusion, FusionParams, FusionSample,
    FusionTrainConfig,
};
use frame_core::mask::BinaryMask;
use frame_core::{Error, Heatmap};
use proptest::prelude::*;

fn maps_strategy(k: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
    prop::collection::vec(prop::collection::vec(0.0f32..=1.0, 20), k)
}

proptest! {
    #[test]
    fn weights_form_a_probability_vector(
        scores in prop::collection::vec(0.0f64..1.0, 1..8),
        biases in prop::collection::vec(-5.0f64..5.0, 8),
        t in 0.5f64..5.0,
    ) {
        let fp = FusionParams { rank_biases: biases, temperature: t };
        let w = fp.weights(&scores).unwrap();
        if scores.len() == 1 {
            prop_assert_eq!(w, vec![1.0]);
            return Ok(());
        }
        prop_assert!(w.iter().all(|&x| x > 0.0 && x < 1.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fusion_is_convex(maps in maps_strategy(4), scores in prop::collection::vec(0.0f64..1.0, 4)) {
        let hm: Vec<Heatmap> = maps.into_iter().map(|v| Heatmap::new(5, 4, v).unwrap()).collect();
        let refs: Vec<&Heatmap> = hm.iter().collect();
        let fused = fuse(&refs, &scores, &FusionParams::zeros(4)).unwrap();
        for (i, v) in fused.values().iter().enumerate() {
            let lo = hm.iter().map(|m| m.values()[i]).fold(f32::MAX, f32::min);
            let hi = hm.iter().map(|m| m.values()[i]).fold(f32::MIN, f32::max);
            prop_assert!((0.0..=1.0).contains(v));
            prop_assert!(*v >= lo - 1e-6 && *v <= hi + 1e-6);
        }
    }

    #[test]
    fn sorted_scores_give_sorted_weights(mut scores in prop::collection::vec(-3.0f64..3.0, 2..6)) {
        scores.sort_by(|a, b| b.total_cmp(a));
        let w = FusionParams::zeros(scores.len()).weights(&scores).unwrap();
        prop_assert!(w.windows(2).all(|p| p[0] >= p[1]));
    }
}

#[test]
fn single_path_passes_through() {
    let m = Heatmap::new(2, 2, vec![0.1, 0.7, 0.3, 0.9]).unwrap();
    let fused = fuse(&[&m], &[0.42], &FusionParams { rank_biases: vec![1.3], temperature: 1.0 }).unwrap();
    assert_eq!(fused, m);
}

#[test]
fn softmax_examples() {
    let w = softmax(&[0.0, 0.0, 0.0]);
    assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    let w = softmax(&[1.0, 0.0]);
    assert!((w[0] - 1.0 / (1.0 + (-1f64).exp())).abs() < 1e-15);
    let w = softmax(&[1000.0, 0.0]);
    assert!(w[0].is_finite() && w[0] > 0.999);
}

#[test]
fn topk_errors_and_ties() {
    let ranked = vec![(3, 0.9), (1, 0.5), (0, 0.5)];
    assert_eq!(select_topk(&ranked, 2).unwrap(), vec![3, 1]);
    assert!(matches!(select_topk(&ranked, 4), Err(Error::NotEnoughCandidates { needed: 4, available: 3 })));
}

#[test]
fn localization_is_strict_at_half() {
    let m = Heatmap::new(2, 1, vec![0.5, 0.5001]).unwrap();
    assert_eq!(localize(&m).data(), &[false, true]);
}

#[test]
fn perfect_prediction_has_near_zero_loss() {
    let gt = BinaryMask::new(2, 2, vec![true, false, false, true]).unwrap();
    let pred = Heatmap::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    assert!(bce_dice_loss(&pred, &gt).unwrap() < 1e-5);
    let half = Heatmap::constant(2, 2, 0.5);
    let expected = 2f64.ln() + (1.0 - (2.0 * 1.0 + 1e-6) / (2.0 + 2.0 + 1e-6));
    assert!((bce_dice_loss(&half, &gt).unwrap() - expected).abs() < 1e-9);
}

#[test]
fn training_favours_the_informative_rank() {
    // rank 0 always matches the mask, rank 1 is its complement
    let gt = BinaryMask::new(4, 1, vec![true, true, false, false]).unwrap();
    let good = Heatmap::new(4, 1, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
    let bad = Heatmap::new(4, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
    let samples: Vec<FusionSample> = (0..8)
        .map(|_| FusionSample { maps: vec![good.clone(), bad.clone()], scores: vec![0.5, 0.5], mask: gt.clone() })
        .collect();
    let fp = train_fusion(&samples, 2, &FusionTrainConfig { epochs: 30, ..Default::default() }).unwrap();
    assert!(fp.rank_biases[0] > fp.rank_biases[1]);
    let zero = train_fusion(&samples, 2, &FusionTrainConfig { epochs: 0, ..Default::default() }).unwrap();
    assert_eq!(zero.rank_biases, vec![0.0, 0.0]);
}
