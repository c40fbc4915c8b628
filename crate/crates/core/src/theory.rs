//! Monte-Carlo checks of the selection guarantees.
//!
//! Synthetic contexts carry the true performance of every candidate path.
//! A scorer whose error is bounded by `epsilon` picks the argmax of noisy
//! scores; the regret and improvement statistics are compared with the
//! closed-form bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Candidate index of the uniform-all baseline.
pub const AVG_INDEX: usize = 0;
/// Candidate index of the fixed best-single baseline.
pub const BS_INDEX: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConfig {
    pub alpha: f64,
    pub c0: f64,
    pub epsilon: f64,
    pub p_avg: f64,
    pub gamma_avg: f64,
    pub p_bs: f64,
    pub gamma_bs: f64,
    pub n_contexts: usize,
    /// Candidates per context, baselines included.
    pub n_candidates: usize,
    pub seed: u64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            c0: 1.0,
            epsilon: 0.05,
            p_avg: 0.5,
            gamma_avg: 0.2,
            p_bs: 0.5,
            gamma_bs: 0.2,
            n_contexts: 10_000,
            n_candidates: 8,
            seed: 0,
        }
    }
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleConfig(m));
        if self.alpha.is_nan() || self.alpha <= 0.0 || self.c0.is_nan() || self.c0 <= 0.0 {
            return bad("alpha and c0 must be positive".into());
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return bad("epsilon must be finite and non-negative".into());
        }
        for (name, v) in [("p_avg", self.p_avg), ("gamma_avg", self.gamma_avg), ("p_bs", self.p_bs), ("gamma_bs", self.gamma_bs)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} = {v} is outside (0, 1]"));
            }
        }
        if self.n_contexts == 0 {
            return bad("need at least one context".into());
        }
        if self.n_candidates < 4 {
            return bad("need at least four candidates (two baselines, oracle, runner-up)".into());
        }
        Ok(())
    }

    /// `2^(alpha+1) * c0`.
    pub fn c_alpha(&self) -> f64 {
        2f64.powf(self.alpha + 1.0) * self.c0
    }

    /// `C_alpha * epsilon^(alpha+1)`.
    pub fn regret_bound(&self) -> f64 {
        self.c_alpha() * self.epsilon.powf(self.alpha + 1.0)
    }

    /// Largest scorer error for which strict improvement is guaranteed
    /// against a baseline that trails by `gamma` with probability `p`.
    pub fn epsilon_threshold(&self, p: f64, gamma: f64) -> f64 {
        (p * gamma / self.c_alpha()).powf(1.0 / (self.alpha + 1.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticContext {
    pub mu: Vec<f64>,
    pub gap: f64,
    /// The uniform-all baseline trails the best candidate by at least `gamma_avg`.
    pub in_s_avg: bool,
    pub in_s_bs: bool,
}

impl SyntheticContext {
    pub fn best(&self) -> f64 {
        self.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Recomputed top-two difference.
    pub fn top_two_gap(&self) -> f64 {
        let mut s = self.mu.clone();
        s.sort_by(|a, b| b.total_cmp(a));
        s[0] - s[1]
    }
}

/// Inverse of the gap law `F(t) = min(1, c0 t^alpha)`; mass beyond `t = 1`
/// is placed at 1.
pub fn sample_gap(u: f64, alpha: f64, c0: f64) -> f64 {
    (u / c0).powf(1.0 / alpha).min(1.0)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn one_context(cfg: &TheoryConfig, rng: &mut ChaCha8Rng) -> SyntheticContext {
    let m = cfg.n_candidates;
    let g = sample_gap(rng.gen::<f64>(), cfg.alpha, cfg.c0);
    let floor = cfg.gamma_avg.max(cfg.gamma_bs).max(g);
    let best = if floor >= 1.0 { 1.0 } else { rng.gen_range(floor..=1.0) };
    let second = best - g;
    let mut mu = vec![0.0; m];
    let oracle = rng.gen_range(2..m);
    let runner_up = loop {
        let i = rng.gen_range(2..m);
        if i != oracle {
            break i;
        }
    };
    for (i, v) in mu.iter_mut().enumerate().skip(2) {
        *v = if i == oracle {
            best
        } else if i == runner_up {
            second
        } else {
            rng.gen_range(0.0..=second)
        };
    }
    // A baseline in its "suboptimal" set trails by at least gamma (and never
    // beats the runner-up); otherwise it is as good as the runner-up.
    let mut baseline = |p: f64, gamma: f64| {
        if rng.gen_bool(p) {
            rng.gen_range(0.0..=(best - gamma.max(g)).max(0.0))
        } else {
            second
        }
    };
    mu[AVG_INDEX] = baseline(cfg.p_avg, cfg.gamma_avg);
    mu[BS_INDEX] = baseline(cfg.p_bs, cfg.gamma_bs);
    SyntheticContext {
        in_s_avg: best - mu[AVG_INDEX] >= cfg.gamma_avg,
        in_s_bs: best - mu[BS_INDEX] >= cfg.gamma_bs,
        mu,
        gap: g,
    }
}

pub fn gen_contexts(cfg: &TheoryConfig) -> Result<Vec<SyntheticContext>> {
    cfg.validate()?;
    Ok((0..cfg.n_contexts)
        .into_par_iter()
        .map(|i| one_context(cfg, &mut rng_for(cfg.seed, i as u64)))
        .collect())
}

/// Argmax of `mu_i + u_i`, `u_i` uniform in `[-epsilon, epsilon]`; ties go to
/// the lowest index.
pub fn noisy_select(ctx: &SyntheticContext, epsilon: f64, rng: &mut impl Rng) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, m) in ctx.mu.iter().enumerate() {
        let s = if epsilon > 0.0 { m + rng.gen_range(-epsilon..=epsilon) } else { *m };
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// Per-context outcome of noisy selection.
#[derive(Clone, Copy, Debug)]
pub struct Selection {
    pub regret: f64,
    pub selected_mu: f64,
    pub gap: f64,
}

pub fn run_selection(cfg: &TheoryConfig, contexts: &[SyntheticContext]) -> Vec<Selection> {
    contexts
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut rng = rng_for(cfg.seed ^ 0x9e37_79b9_7f4a_7c15, i as u64);
            let s = noisy_select(c, cfg.epsilon, &mut rng);
            Selection { regret: c.best() - c.mu[s], selected_mu: c.mu[s], gap: c.gap }
        })
        .collect()
}

fn mean_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = if n > 1.0 { values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub epsilon: f64,
    pub mean_regret: f64,
    pub standard_error: f64,
    pub bound: f64,
    pub max_regret: f64,
    /// Contexts whose regret exceeds `2 epsilon`.
    pub lemma2_violations: usize,
    /// Contexts with gap above `2 epsilon` but non-zero regret.
    pub lemma3_violations: usize,
    pub large_gap_contexts: usize,
    pub pass: bool,
}

pub fn verify_regret_bound(cfg: &TheoryConfig) -> Result<RegretReport> {
    let contexts = gen_contexts(cfg)?;
    let sel = run_selection(cfg, &contexts);
    let (mean, se) = mean_se(sel.iter().map(|s| s.regret));
    let two_eps = 2.0 * cfg.epsilon;
    let tol = 1e-12;
    let lemma2 = sel.iter().filter(|s| s.regret > two_eps + tol).count();
    let large: Vec<&Selection> = sel.iter().filter(|s| s.gap > two_eps).collect();
    let lemma3 = large.iter().filter(|s| s.regret != 0.0).count();
    let bound = cfg.regret_bound();
    Ok(RegretReport {
        epsilon: cfg.epsilon,
        mean_regret: mean,
        standard_error: se,
        bound,
        max_regret: sel.iter().map(|s| s.regret).fold(0.0, f64::max),
        lemma2_violations: lemma2,
        lemma3_violations: lemma3,
        large_gap_contexts: large.len(),
        pass: mean <= bound + 3.0 * se && lemma2 == 0 && lemma3 == 0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    UniformAll,
    BestSingle,
}

impl Baseline {
    pub fn index(self) -> usize {
        match self {
            Baseline::UniformAll => AVG_INDEX,
            Baseline::BestSingle => BS_INDEX,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    ConditionNotMet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub baseline: Baseline,
    pub epsilon: f64,
    pub threshold: f64,
    pub condition_holds: bool,
    pub mean_selected: f64,
    pub mean_baseline: f64,
    /// Standard error of the paired difference.
    pub standard_error: f64,
    pub verdict: Verdict,
}

pub fn verify_strict_improvement(cfg: &TheoryConfig, baseline: Baseline) -> Result<ImprovementReport> {
    let (p, gamma) = match baseline {
        Baseline::UniformAll => (cfg.p_avg, cfg.gamma_avg),
        Baseline::BestSingle => (cfg.p_bs, cfg.gamma_bs),
    };
    let threshold = cfg.epsilon_threshold(p, gamma);
    let contexts = gen_contexts(cfg)?;
    let sel = run_selection(cfg, &contexts);
    let idx = baseline.index();
    let n = contexts.len() as f64;
    let mean_selected = sel.iter().map(|s| s.selected_mu).sum::<f64>() / n;
    let mean_baseline = contexts.iter().map(|c| c.mu[idx]).sum::<f64>() / n;
    let (diff, se) = mean_se(sel.iter().zip(&contexts).map(|(s, c)| s.selected_mu - c.mu[idx]));
    let condition_holds = cfg.epsilon < threshold;
    let verdict = if !condition_holds {
        Verdict::ConditionNotMet
    } else if diff > 3.0 * se {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(ImprovementReport {
        baseline,
        epsilon: cfg.epsilon,
        threshold,
        condition_holds,
        mean_selected,
        mean_baseline,
        standard_error: se,
        verdict,
    })
}

/// Everything the `theory` command reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub config: TheoryConfig,
    pub c_alpha: f64,
    pub regret: RegretReport,
    pub uniform_all: ImprovementReport,
    pub best_single: ImprovementReport,
}

impl TheoryReport {
    pub fn run(cfg: &TheoryConfig) -> Result<Self> {
        Ok(Self {
            config: cfg.clone(),
            c_alpha: cfg.c_alpha(),
            regret: verify_regret_bound(cfg)?,
            uniform_all: verify_strict_improvement(cfg, Baseline::UniformAll)?,
            best_single: verify_strict_improvement(cfg, Baseline::BestSingle)?,
        })
    }

    pub fn passed(&self) -> bool {
        self.regret.pass
            && self.uniform_all.verdict != Verdict::Fail
            && self.best_single.verdict != Verdict::Fail
    }

    pub fn to_text(&self) -> String {
        let verdict = |v: Verdict| match v {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::ConditionNotMet => "condition not met",
        };
        let r = &self.regret;
        let mut s = String::new();
        s += &format!(
            "config: alpha={} c0={} epsilon={} n={} candidates={} seed={}\n",
            self.config.alpha, self.config.c0, self.config.epsilon, self.config.n_contexts, self.config.n_candidates, self.config.seed
        );
        s += &format!("C_alpha = {:.4}\n", self.c_alpha);
        s += &format!(
            "regret: mean {:.6} (se {:.6}) bound {:.6} max {:.6} [2*eps = {:.4}: {} violations; {} large-gap contexts, {} with regret] {}\n",
            r.mean_regret,
            r.standard_error,
            r.bound,
            r.max_regret,
            2.0 * r.epsilon,
            r.lemma2_violations,
            r.large_gap_contexts,
            r.lemma3_violations,
            if r.pass { "PASS" } else { "FAIL" }
        );
        for (name, imp) in [("uniform-all", &self.uniform_all), ("best-single", &self.best_single)] {
            s += &format!(
                "vs {name}: threshold {:.4} (epsilon {} {}) selected {:.4} baseline {:.4} se {:.5} {}\n",
                imp.threshold,
                imp.epsilon,
                if imp.condition_holds { "<" } else { ">=" },
                imp.mean_selected,
                imp.mean_baseline,
                imp.standard_error,
                verdict(imp.verdict)
            );
        }
        s
    }
}
