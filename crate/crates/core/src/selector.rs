//! Graph-based path scorer.
//!
//! A path is a chain graph whose nodes start from learned module embeddings.
//! Three GraphSAGE-style layers update each node from itself and the mean of
//! its chain neighbours; the mean of the final node states, concatenated
//! with the image context, goes through a 78-128-64-1 MLP with a sigmoid
//! output. Gradients are derived by hand and checked by finite differences.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use rayon::prelude::*;

use crate::cache::{Checkpoint, Tensor};
use crate::error::{Error, Result};
use crate::features::{Context, FEATURE_DIM, MANIP_DIM};
use crate::forensics::{ModuleId, MODULE_SLOTS};
use crate::supernet::PathGraph;

pub const HIDDEN: usize = 64;
pub const LAYERS: usize = 3;
pub const CONTEXT_DIM: usize = FEATURE_DIM + MANIP_DIM;
pub const HEAD_IN: usize = HIDDEN + CONTEXT_DIM;
pub const HEAD_H1: usize = 128;
pub const HEAD_H2: usize = 64;

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub slots: usize,
    emb: usize,
    layers: [(usize, usize, usize); LAYERS],
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    total: usize,
}

impl Layout {
    pub fn new(slots: usize) -> Self {
        let mut off = 0;
        let mut take = |n: usize| {
            let o = off;
            off += n;
            o
        };
        let emb = take(slots * HIDDEN);
        let layers = [(); LAYERS].map(|_| (take(HIDDEN * HIDDEN), take(HIDDEN * HIDDEN), take(HIDDEN)));
        let w1 = take(HEAD_H1 * HEAD_IN);
        let b1 = take(HEAD_H1);
        let w2 = take(HEAD_H2 * HEAD_H1);
        let b2 = take(HEAD_H2);
        let w3 = take(HEAD_H2);
        let b3 = take(1);
        Self { slots, emb, layers, w1, b1, w2, b2, w3, b3, total: off }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// `(name, shape, offset, fan_in)` of every tensor, in storage order.
    /// Embedding rows are treated as having fan-in `HIDDEN`.
    fn tensors(&self) -> Vec<(String, Vec<usize>, usize, usize)> {
        let mut v = vec![("embeddings".to_string(), vec![self.slots, HIDDEN], self.emb, HIDDEN)];
        for (i, &(ws, wn, b)) in self.layers.iter().enumerate() {
            v.push((format!("layer{i}.w_self"), vec![HIDDEN, HIDDEN], ws, HIDDEN));
            v.push((format!("layer{i}.w_neigh"), vec![HIDDEN, HIDDEN], wn, HIDDEN));
            v.push((format!("layer{i}.bias"), vec![HIDDEN], b, 0));
        }
        v.push(("head.w1".into(), vec![HEAD_H1, HEAD_IN], self.w1, HEAD_IN));
        v.push(("head.b1".into(), vec![HEAD_H1], self.b1, 0));
        v.push(("head.w2".into(), vec![HEAD_H2, HEAD_H1], self.w2, HEAD_H1));
        v.push(("head.b2".into(), vec![HEAD_H2], self.b2, 0));
        v.push(("head.w3".into(), vec![1, HEAD_H2], self.w3, HEAD_H2));
        v.push(("head.b3".into(), vec![1], self.b3, 0));
        v
    }
}

/// Flat parameter vector plus its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectorParams {
    layout: Layout,
    data: Vec<f64>,
}

/// One regression example: a path on an image context and its observed F1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub path: PathGraph,
    pub context: Context,
    pub target: f64,
}

impl TrainingRecord {
    pub fn new(path: PathGraph, context: Context, target: f64) -> Result<Self> {
        if !target.is_finite() || !(0.0..=1.0).contains(&target) {
            return Err(Error::InvalidArgument(format!("target {target} outside [0, 1]")));
        }
        Ok(Self { path, context, target })
    }
}

fn matvec(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(n)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += W^T g` for `W` of shape `g.len() x out.len()`.
fn matvec_t(w: &[f64], g: &[f64], out: &mut [f64]) {
    let n = out.len();
    for (gi, row) in g.iter().zip(w.chunks_exact(n)) {
        if *gi != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += gi * a;
            }
        }
    }
}

/// `G += g x^T`.
fn outer_acc(gw: &mut [f64], g: &[f64], x: &[f64]) {
    let n = x.len();
    for (gi, row) in g.iter().zip(gw.chunks_exact_mut(n)) {
        if *gi != 0.0 {
            for (o, a) in row.iter_mut().zip(x) {
                *o += gi * a;
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean of each node's chain neighbours; zero for a lone node.
fn neighbour_mean(h: &[[f64; HIDDEN]]) -> Vec<[f64; HIDDEN]> {
    let n = h.len();
    (0..n)
        .map(|i| {
            let mut acc = [0.0; HIDDEN];
            let nb: Vec<usize> = [i.checked_sub(1), (i + 1 < n).then_some(i + 1)].into_iter().flatten().collect();
            for &j in &nb {
                for (a, v) in acc.iter_mut().zip(&h[j]) {
                    *a += v;
                }
            }
            if !nb.is_empty() {
                let inv = 1.0 / nb.len() as f64;
                acc.iter_mut().for_each(|a| *a *= inv);
            }
            acc
        })
        .collect()
}

/// Intermediate values kept for backpropagation.
struct Trace {
    /// Node states entering each layer, plus the final states.
    h: Vec<Vec<[f64; HIDDEN]>>,
    agg: Vec<Vec<[f64; HIDDEN]>>,
    x: [f64; HEAD_IN],
    r1: [f64; HEAD_H1],
    r2: [f64; HEAD_H2],
    y: f64,
}

impl SelectorParams {
    pub fn zeros(slots: usize) -> Self {
        let layout = Layout::new(slots);
        Self { data: vec![0.0; layout.total], layout }
    }

    /// Weights and embeddings uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(slots: usize, seed: u64) -> Self {
        let mut p = Self::zeros(slots);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, shape, off, fan_in) in p.layout.tensors() {
            if fan_in == 0 {
                continue;
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            for v in &mut p.data[off..off + n] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        p
    }

    pub fn default_init(seed: u64) -> Self {
        Self::init(MODULE_SLOTS, seed)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn slots(&self) -> usize {
        self.layout.slots
    }

    pub fn param_count(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mutable access to the output bias.
    pub fn output_bias_mut(&mut self) -> &mut f64 {
        &mut self.data[self.layout.b3]
    }

    fn check_path(&self, path: &PathGraph) -> Result<()> {
        match path.nodes().iter().find(|&&id| id as usize >= self.layout.slots) {
            Some(&id) => Err(Error::UnknownModuleId(id)),
            None => Ok(()),
        }
    }

    fn embedding(&self, id: ModuleId) -> [f64; HIDDEN] {
        let o = self.layout.emb + id as usize * HIDDEN;
        self.data[o..o + HIDDEN].try_into().expect("embedding row")
    }

    fn run(&self, path: &PathGraph, ctx: &Context) -> Trace {
        let l = &self.layout;
        let d = &self.data;
        let mut h: Vec<Vec<[f64; HIDDEN]>> = vec![path.nodes().iter().map(|&id| self.embedding(id)).collect()];
        let mut aggs = Vec::with_capacity(LAYERS);
        for &(ws, wn, b) in &l.layers {
            let cur = h.last().expect("layer input");
            let agg = neighbour_mean(cur);
            let next = cur
                .iter()
                .zip(&agg)
                .map(|(hi, ai)| {
                    let mut z: [f64; HIDDEN] = d[b..b + HIDDEN].try_into().expect("bias");
                    matvec(&d[ws..ws + HIDDEN * HIDDEN], hi, &mut z);
                    matvec(&d[wn..wn + HIDDEN * HIDDEN], ai, &mut z);
                    z.map(|v| v.max(0.0))
                })
                .collect();
            aggs.push(agg);
            h.push(next);
        }
        let last = h.last().expect("final states");
        let inv = 1.0 / last.len() as f64;
        let mut x = [0.0; HEAD_IN];
        for node in last {
            for (xi, v) in x.iter_mut().zip(node) {
                *xi += v * inv;
            }
        }
        x[HIDDEN..].copy_from_slice(&ctx.vector());
        let mut r1: [f64; HEAD_H1] = d[l.b1..l.b1 + HEAD_H1].try_into().expect("b1");
        matvec(&d[l.w1..l.w1 + HEAD_H1 * HEAD_IN], &x, &mut r1);
        let r1 = r1.map(|v| v.max(0.0));
        let mut r2: [f64; HEAD_H2] = d[l.b2..l.b2 + HEAD_H2].try_into().expect("b2");
        matvec(&d[l.w2..l.w2 + HEAD_H2 * HEAD_H1], &r1, &mut r2);
        let r2 = r2.map(|v| v.max(0.0));
        let logit = d[l.b3] + d[l.w3..l.w3 + HEAD_H2].iter().zip(&r2).map(|(a, b)| a * b).sum::<f64>();
        Trace { h, agg: aggs, x, r1, r2, y: sigmoid(logit) }
    }

    /// Predicted performance of `path` on `ctx`, in `(0, 1)`.
    pub fn forward(&self, path: &PathGraph, ctx: &Context) -> Result<f64> {
        self.check_path(path)?;
        Ok(self.run(path, ctx).y)
    }

    /// Accumulates `scale * d(loss)/d(params)` into `grad`, where the loss
    /// is `(forward - target)^2`; returns the loss.
    fn backward(&self, rec: &TrainingRecord, scale: f64, grad: &mut [f64]) -> f64 {
        let l = &self.layout;
        let d = &self.data;
        let t = self.run(&rec.path, &rec.context);
        let err = t.y - rec.target;
        let g_logit = scale * 2.0 * err * t.y * (1.0 - t.y);

        grad[l.b3] += g_logit;
        let mut g_r2 = [0.0; HEAD_H2];
        for i in 0..HEAD_H2 {
            grad[l.w3 + i] += g_logit * t.r2[i];
            if t.r2[i] > 0.0 {
                g_r2[i] = g_logit * d[l.w3 + i];
            }
        }
        outer_acc(&mut grad[l.w2..l.w2 + HEAD_H2 * HEAD_H1], &g_r2, &t.r1);
        grad[l.b2..l.b2 + HEAD_H2].iter_mut().zip(&g_r2).for_each(|(a, b)| *a += b);
        let mut g_r1 = [0.0; HEAD_H1];
        matvec_t(&d[l.w2..l.w2 + HEAD_H2 * HEAD_H1], &g_r2, &mut g_r1);
        for (g, r) in g_r1.iter_mut().zip(&t.r1) {
            if *r <= 0.0 {
                *g = 0.0;
            }
        }
        outer_acc(&mut grad[l.w1..l.w1 + HEAD_H1 * HEAD_IN], &g_r1, &t.x);
        grad[l.b1..l.b1 + HEAD_H1].iter_mut().zip(&g_r1).for_each(|(a, b)| *a += b);
        let mut g_x = [0.0; HEAD_IN];
        matvec_t(&d[l.w1..l.w1 + HEAD_H1 * HEAD_IN], &g_r1, &mut g_x);

        let n = rec.path.len();
        let inv = 1.0 / n as f64;
        let mut g_h: Vec<[f64; HIDDEN]> = vec![[0.0; HIDDEN]; n];
        for gh in g_h.iter_mut() {
            for (a, b) in gh.iter_mut().zip(&g_x[..HIDDEN]) {
                *a = b * inv;
            }
        }
        for (li, &(ws, wn, b)) in l.layers.iter().enumerate().rev() {
            let input = &t.h[li];
            let output = &t.h[li + 1];
            let agg = &t.agg[li];
            let mut g_in: Vec<[f64; HIDDEN]> = vec![[0.0; HIDDEN]; n];
            let mut g_agg: Vec<[f64; HIDDEN]> = vec![[0.0; HIDDEN]; n];
            for i in 0..n {
                let mut gz = g_h[i];
                for (g, o) in gz.iter_mut().zip(&output[i]) {
                    if *o <= 0.0 {
                        *g = 0.0;
                    }
                }
                grad[b..b + HIDDEN].iter_mut().zip(&gz).for_each(|(a, v)| *a += v);
                outer_acc(&mut grad[ws..ws + HIDDEN * HIDDEN], &gz, &input[i]);
                outer_acc(&mut grad[wn..wn + HIDDEN * HIDDEN], &gz, &agg[i]);
                matvec_t(&d[ws..ws + HIDDEN * HIDDEN], &gz, &mut g_in[i]);
                matvec_t(&d[wn..wn + HIDDEN * HIDDEN], &gz, &mut g_agg[i]);
            }
            // the neighbour mean spreads each node's aggregate gradient back
            for i in 0..n {
                let nb: Vec<usize> = [i.checked_sub(1), (i + 1 < n).then_some(i + 1)].into_iter().flatten().collect();
                if nb.is_empty() {
                    continue;
                }
                let w = 1.0 / nb.len() as f64;
                for &j in &nb {
                    let ga = g_agg[i];
                    for (a, v) in g_in[j].iter_mut().zip(&ga) {
                        *a += v * w;
                    }
                }
            }
            g_h = g_in;
        }
        for (i, &id) in rec.path.nodes().iter().enumerate() {
            let o = l.emb + id as usize * HIDDEN;
            grad[o..o + HIDDEN].iter_mut().zip(&g_h[i]).for_each(|(a, v)| *a += v);
        }
        err * err
    }

    /// Gradient of the squared error of one record.
    pub fn gradient(&self, rec: &TrainingRecord) -> Result<Vec<f64>> {
        self.check_path(&rec.path)?;
        let mut g = vec![0.0; self.data.len()];
        self.backward(rec, 1.0, &mut g);
        Ok(g)
    }

    /// Mean squared error and its gradient over a batch.
    ///
    /// Work is split into fixed chunks whose partial sums are added in
    /// order, so the result does not depend on the thread count.
    pub fn batch_gradient(&self, batch: &[&TrainingRecord]) -> (f64, Vec<f64>) {
        const CHUNK: usize = 16;
        let scale = 1.0 / batch.len() as f64;
        let partials: Vec<(f64, Vec<f64>)> = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0; self.data.len()];
                let loss = chunk.iter().map(|r| self.backward(r, scale, &mut g)).sum::<f64>();
                (loss, g)
            })
            .collect();
        let mut g = vec![0.0; self.data.len()];
        let mut loss = 0.0;
        for (l, pg) in partials {
            loss += l;
            g.iter_mut().zip(&pg).for_each(|(a, b)| *a += b);
        }
        (loss * scale, g)
    }

    pub fn mse(&self, records: &[TrainingRecord]) -> f64 {
        if records.is_empty() {
            return 0.0;
        }
        let errs: Vec<f64> = records.par_iter().map(|r| (self.run(&r.path, &r.context).y - r.target).powi(2)).collect();
        errs.iter().sum::<f64>() / records.len() as f64
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        self.layout
            .tensors()
            .into_iter()
            .map(|(name, shape, off, _)| {
                let n: usize = shape.iter().product();
                Tensor::new(format!("selector.{name}"), shape, self.data[off..off + n].to_vec())
            })
            .collect()
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let emb = ck
            .tensor("selector.embeddings")
            .ok_or_else(|| Error::MissingModel("selector.embeddings".into()))?;
        let mut p = Self::zeros(emb.shape[0]);
        for (name, shape, off, _) in p.layout.tensors() {
            let full = format!("selector.{name}");
            let t = ck.tensor(&full).ok_or_else(|| Error::MissingModel(full.clone()))?;
            if t.shape != shape {
                return Err(Error::DimensionMismatch(format!("{full}: {:?} vs {shape:?}", t.shape)));
            }
            p.data[off..off + t.values.len()].copy_from_slice(&t.values);
        }
        Ok(p)
    }
}

/// Scores every path and sorts descending; ties keep input order.
pub fn score_candidates(params: &SelectorParams, paths: &[PathGraph], ctx: &Context) -> Result<Vec<(usize, f64)>> {
    let scores = paths.iter().map(|p| params.forward(p, ctx)).collect::<Result<Vec<_>>>()?;
    Ok(rank_scores(&scores))
}

/// `(index, score)` pairs sorted by descending score, stable.
pub fn rank_scores(scores: &[f64]) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 128,
            epochs: 15,
            clip_norm: 5.0,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    wd: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, lr: f64, wd: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr, wd, beta1, beta2, eps }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.wd * params[i]);
        }
    }
}

/// Rescales `grad` in place so its L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: SelectorParams,
    pub best_epoch: usize,
    pub initial_val_loss: f64,
    /// Validation MSE after each epoch.
    pub val_losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn best_val_loss(&self) -> f64 {
        self.val_losses.get(self.best_epoch).copied().unwrap_or(self.initial_val_loss)
    }
}

/// Mini-batch regression of path scores onto observed performance; returns
/// the epoch with the lowest validation MSE (the training set stands in when
/// `val` is empty).
pub fn train(dataset: &[TrainingRecord], val: &[TrainingRecord], seed: u64, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_slots(dataset, val, seed, cfg, MODULE_SLOTS)
}

pub fn train_with_slots(
    dataset: &[TrainingRecord],
    val: &[TrainingRecord],
    seed: u64,
    cfg: &TrainConfig,
    slots: usize,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut params = SelectorParams::init(slots, seed);
    for r in dataset.iter().chain(val) {
        params.check_path(&r.path)?;
    }
    let val_set = if val.is_empty() { dataset } else { val };
    let initial_val_loss = params.mse(val_set);
    let mut adam = Adam::new(params.param_count(), cfg.learning_rate, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5e1e_c70f);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut best = (params.clone(), usize::MAX, f64::INFINITY);
    let mut val_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&TrainingRecord> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (_, mut g) = params.batch_gradient(&batch);
            clip_global_norm(&mut g, cfg.clip_norm);
            adam.step(&mut params.data, &g);
        }
        let v = params.mse(val_set);
        log::debug!("selector epoch {epoch}: val mse {v:.6}");
        if v < best.2 {
            best = (params.clone(), epoch, v);
        }
        val_losses.push(v);
    }
    let (params, best_epoch) = if best.1 == usize::MAX { (params, 0) } else { (best.0, best.1) };
    Ok(TrainOutcome { params, best_epoch, initial_val_loss, val_losses })
}

/// Largest relative error between the analytic gradient of the squared error
/// and central finite differences (step 1e-5) over `coords` random
/// coordinates. Coordinates whose perturbation flips a ReLU are redrawn.
pub fn gradient_check(params: &SelectorParams, rec: &TrainingRecord, coords: usize, seed: u64) -> Result<f64> {
    let analytic = params.gradient(rec)?;
    gradient_check_against(params, rec, &analytic, coords, seed)
}

/// As [`gradient_check`], with a caller-supplied analytic gradient.
pub fn gradient_check_against(
    params: &SelectorParams,
    rec: &TrainingRecord,
    analytic: &[f64],
    coords: usize,
    seed: u64,
) -> Result<f64> {
    const STEP: f64 = 1e-5;
    params.check_path(&rec.path)?;
    let loss = |p: &SelectorParams| (p.run(&rec.path, &rec.context).y - rec.target).powi(2);
    let pattern = |p: &SelectorParams| activation_pattern(&p.run(&rec.path, &rec.context));
    let base = pattern(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut tries = 0;
    while checked < coords.min(params.param_count()) && tries < coords * 20 {
        tries += 1;
        let i = rng.gen_range(0..params.param_count());
        let orig = probe.data[i];
        probe.data[i] = orig + STEP;
        let (lp, pp) = (loss(&probe), pattern(&probe));
        probe.data[i] = orig - STEP;
        let (lm, pm) = (loss(&probe), pattern(&probe));
        probe.data[i] = orig;
        if pp != base || pm != base {
            continue;
        }
        let numeric = (lp - lm) / (2.0 * STEP);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs());
        let rel = if denom < 1e-8 { 0.0 } else { (a - numeric).abs() / denom.max(1e-6) };
        worst = worst.max(rel);
        checked += 1;
    }
    Ok(worst)
}

fn activation_pattern(t: &Trace) -> Vec<bool> {
    t.h[1..]
        .iter()
        .flatten()
        .flat_map(|n| n.iter().map(|v| *v > 0.0))
        .chain(t.r1.iter().map(|v| *v > 0.0))
        .chain(t.r2.iter().map(|v| *v > 0.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{manipulation_onehot, ManipType};

    fn ctx(seed: u64) -> Context {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Context {
            image_features: std::array::from_fn(|_| rng.gen_range(0.0..1.0)),
            manip_onehot: manipulation_onehot(ManipType::ALL[rng.gen_range(0..5)]),
            image_id: "x".into(),
        }
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(SelectorParams::zeros(15).param_count(), 44_161);
        assert_eq!(SelectorParams::zeros(MODULE_SLOTS).param_count(), 44_225);
    }

    #[test]
    fn zero_network_scores_half() {
        let p = SelectorParams::zeros(MODULE_SLOTS);
        let path = PathGraph::new(vec![0, 3, 5]).unwrap();
        assert_eq!(p.forward(&path, &ctx(1)).unwrap(), 0.5);
    }

    #[test]
    fn bias_only_network() {
        let mut p = SelectorParams::zeros(MODULE_SLOTS);
        *p.output_bias_mut() = 1.3;
        let y = p.forward(&PathGraph::single(2), &ctx(2)).unwrap();
        assert!((y - 1.0 / (1.0 + (-1.3f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn unknown_module_is_rejected() {
        let p = SelectorParams::zeros(4);
        assert!(matches!(p.forward(&PathGraph::single(6), &ctx(0)), Err(Error::UnknownModuleId(6))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for s in 0..5 {
            let p = SelectorParams::init(MODULE_SLOTS, s);
            let rec = TrainingRecord::new(PathGraph::new(vec![1, 4, 0, 6]).unwrap(), ctx(s), 0.3).unwrap();
            let err = gradient_check(&p, &rec, 200, s).unwrap();
            assert!(err < 1e-4, "seed {s}: {err}");
        }
    }

    #[test]
    fn adam_first_step_is_sign_like() {
        let mut adam = Adam::new(2, 0.1, 0.0, 0.9, 0.999, 1e-8);
        let mut p = [1.0, 1.0];
        adam.step(&mut p, &[3.0, -0.01]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] - 1.1).abs() < 1e-5);
    }
}
