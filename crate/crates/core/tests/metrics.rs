use frame_core::mask::BinaryMask;
use frame_core::metrics::{accuracy, miou, pixel_f1, roc_auc};
use frame_core::Error;
use proptest::prelude::*;

fn oracle_f1(p: &[bool], g: &[bool]) -> f64 {
    let tp = p.iter().zip(g).filter(|(a, b)| **a && **b).count();
    let np = p.iter().filter(|&&a| a).count();
    let ng = g.iter().filter(|&&a| a).count();
    if np + ng == 0 {
        1.0
    } else {
        (2 * tp) as f64 / (np + ng) as f64
    }
}

fn oracle_miou(p: &[bool], g: &[bool]) -> f64 {
    let iou = |class: bool| {
        let inter = p.iter().zip(g).filter(|(a, b)| **a == class && **b == class).count();
        let union = p.iter().zip(g).filter(|(a, b)| **a == class || **b == class).count();
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    };
    (iou(true) + iou(false)) / 2.0
}

fn pairwise_auc(s: &[f64], l: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in (0..s.len()).filter(|&i| l[i]) {
        for j in (0..s.len()).filter(|&j| !l[j]) {
            pairs += 1.0;
            if s[i] > s[j] {
                wins += 1.0;
            } else if s[i] == s[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn two_classes() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..20)
        .prop_flat_map(|n| (prop::collection::vec(0u8..10, n), prop::collection::vec(any::<bool>(), n)))
        .prop_filter("both classes", |(_, l)| l.iter().any(|&x| x) && l.iter().any(|&x| !x))
        .prop_map(|(s, l)| (s.into_iter().map(|v| f64::from(v) / 10.0).collect(), l))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn mask_metrics_match_enumeration(p in prop::collection::vec(any::<bool>(), 36), g in prop::collection::vec(any::<bool>(), 36)) {
        let pm = BinaryMask::new(6, 6, p.clone()).unwrap();
        let gm = BinaryMask::new(6, 6, g.clone()).unwrap();
        prop_assert_eq!(pixel_f1(&pm, &gm).unwrap(), oracle_f1(&p, &g));
        prop_assert_eq!(miou(&pm, &gm).unwrap(), oracle_miou(&p, &g));
    }

    #[test]
    fn auc_matches_pairs((s, l) in two_classes()) {
        prop_assert_eq!(roc_auc(&s, &l).unwrap(), pairwise_auc(&s, &l));
    }

    #[test]
    fn auc_ignores_monotone_transforms((s, l) in two_classes(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let t: Vec<f64> = s.iter().map(|x| (a * x + b).exp()).collect();
        prop_assert_eq!(roc_auc(&s, &l).unwrap(), roc_auc(&t, &l).unwrap());
    }
}

#[test]
fn empty_prediction_against_empty_truth() {
    let e = BinaryMask::empty(3, 3);
    assert_eq!(pixel_f1(&e, &e).unwrap(), 1.0);
    assert_eq!(miou(&e, &e).unwrap(), 1.0);
    let mut p = BinaryMask::empty(3, 3);
    p.set(1, 1, true);
    assert_eq!(pixel_f1(&p, &e).unwrap(), 0.0);
    assert!(matches!(pixel_f1(&p, &BinaryMask::empty(2, 3)), Err(Error::DimensionMismatch(_))));
}

#[test]
fn accuracy_uses_a_strict_threshold() {
    assert_eq!(accuracy(&[0.5, 0.51, 0.2, 0.9], &[false, true, false, false], 0.5), 0.75);
}
