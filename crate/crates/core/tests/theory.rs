use frame_core::theory::{
    gen_contexts, noisy_select, run_selection, sample_gap, verify_regret_bound, verify_strict_improvement, Baseline,
    SyntheticContext, TheoryConfig, Verdict, BS_INDEX,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(n: usize) -> TheoryConfig {
    TheoryConfig { n_contexts: n, ..TheoryConfig::default() }
}

fn empirical_cdf(gaps: &[f64], t: f64) -> f64 {
    gaps.iter().filter(|&&g| g <= t).count() as f64 / gaps.len() as f64
}

#[test]
fn uniform_gap_law() {
    let gaps: Vec<f64> = gen_contexts(&cfg(10_000)).unwrap().iter().map(|c| c.gap).collect();
    assert!((empirical_cdf(&gaps, 0.3) - 0.3).abs() < 0.02);
}

#[test]
fn gap_law_respects_the_tsybakov_bound() {
    for (alpha, c0) in [(1.0, 1.0), (2.0, 2.0), (0.5, 1.5)] {
        let c = TheoryConfig { alpha, c0, n_contexts: 10_000, gamma_avg: 0.1, gamma_bs: 0.1, ..TheoryConfig::default() };
        let gaps: Vec<f64> = gen_contexts(&c).unwrap().iter().map(|c| c.gap).collect();
        for i in 1..=9 {
            let t = f64::from(i) / 10.0;
            let bound = (c0 * t.powf(alpha)).min(1.0);
            let sigma = (bound * (1.0 - bound) / gaps.len() as f64).sqrt();
            assert!(empirical_cdf(&gaps, t) <= bound + 3.0 * sigma + 1e-12, "alpha {alpha} c0 {c0} t {t}");
        }
    }
    assert_eq!(sample_gap(0.5, 2.0, 2.0), 0.5);
}

#[test]
fn oracle_dominates_every_candidate() {
    for c in gen_contexts(&cfg(2000)).unwrap() {
        let best = c.best();
        assert!(c.mu.iter().all(|&m| m <= best));
        let mut s = c.mu.clone();
        s.sort_by(|a, b| b.total_cmp(a));
        assert!((s[0] - s[1] - c.gap).abs() < 1e-12);
    }
}

#[test]
fn noiseless_selection_has_zero_regret() {
    let c = TheoryConfig { epsilon: 0.0, ..cfg(5000) };
    let r = verify_regret_bound(&c).unwrap();
    assert_eq!(r.mean_regret, 0.0);
    assert_eq!(r.max_regret, 0.0);
    assert!(r.pass);
}

#[test]
fn regret_never_exceeds_twice_epsilon() {
    for eps in [0.01, 0.1, 0.3] {
        let c = TheoryConfig { epsilon: eps, ..cfg(5000) };
        let ctxs = gen_contexts(&c).unwrap();
        for (ctx, s) in ctxs.iter().zip(run_selection(&c, &ctxs)) {
            assert!(s.regret <= 2.0 * eps + 1e-12);
            if ctx.gap > 2.0 * eps {
                assert_eq!(s.regret, 0.0);
            }
        }
    }
}

#[test]
fn ties_go_to_the_lowest_index() {
    let ctx = SyntheticContext { mu: vec![0.4, 0.7, 0.7], gap: 0.0, in_s_avg: false, in_s_bs: false };
    assert_eq!(noisy_select(&ctx, 0.0, &mut ChaCha8Rng::seed_from_u64(0)), 1);
}

#[test]
fn noiseless_improvement_over_best_single() {
    let c = TheoryConfig { epsilon: 0.0, p_bs: 1.0, gamma_bs: 0.3, ..cfg(5000) };
    for ctx in gen_contexts(&c).unwrap() {
        assert!(ctx.best() - ctx.mu[BS_INDEX] >= 0.3 - 1e-12);
    }
    let r = verify_strict_improvement(&c, Baseline::BestSingle).unwrap();
    assert!(r.mean_selected - r.mean_baseline >= 0.3);
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn violated_condition_makes_no_claim() {
    let c = TheoryConfig { epsilon: 0.9, ..cfg(1000) };
    let r = verify_strict_improvement(&c, Baseline::UniformAll).unwrap();
    assert!(!r.condition_holds);
    assert_eq!(r.verdict, Verdict::ConditionNotMet);
}

#[test]
fn generation_is_seeded() {
    let a = gen_contexts(&cfg(300)).unwrap();
    assert_eq!(a, gen_contexts(&cfg(300)).unwrap());
    assert_ne!(a, gen_contexts(&TheoryConfig { seed: 1, ..cfg(300) }).unwrap());
}
