//! End-to-end workflows: precompute, selector and fusion training, single
//! image analysis and the benchmark ladder.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{load_checkpoint, save_checkpoint, Checkpoint, HeatmapCache};
use crate::error::{Error, Result};
use crate::features::{Context, ManipType};
use crate::forensics::{ModuleId, ModuleKind, Registry, MODULE_SLOTS};
use crate::fusion::{detection_score, fuse, localize, train_fusion, weighted_sum, FusionParams, FusionSample, FusionTrainConfig};
use crate::heatmap::Heatmap;
use crate::mask::BinaryMask;
use crate::metrics::{accuracy, miou, pixel_f1, roc_auc};
use crate::selector::{rank_scores, train_with_slots, SelectorParams, TrainConfig, TrainingRecord};
use crate::supernet::{image_seed, intra_path_fuse, path_output_from, sample_paths, AnalysisImage, Executor, PathGraph};
use crate::synth::{Corpus, Label, ManifestEntry, Split};

pub const SELECTOR_FILE: &str = "selector.frck";
pub const FUSION_FILE: &str = "fusion.frck";
pub const DEFAULT_BIG_K: usize = 50;
pub const DEFAULT_SMALL_K: usize = 5;

/// Candidate-set size, fusion arity and seed shared by every stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunParams {
    pub big_k: usize,
    pub small_k: usize,
    pub seed: u64,
}

impl Default for RunParams {
    fn default() -> Self {
        Self { big_k: DEFAULT_BIG_K, small_k: DEFAULT_SMALL_K, seed: 0 }
    }
}

impl RunParams {
    pub fn validate(&self) -> Result<()> {
        if self.small_k == 0 || self.big_k < self.small_k {
            return Err(Error::InvalidArgument(format!(
                "need K >= k >= 1 (K = {}, k = {})",
                self.big_k, self.small_k
            )));
        }
        Ok(())
    }
}

/// A corpus item with its module heatmaps.
pub struct LoadedItem {
    pub entry: ManifestEntry,
    pub image: AnalysisImage,
    pub mask: BinaryMask,
    pub context: Context,
    pub maps: Vec<(ModuleId, Heatmap)>,
}

impl LoadedItem {
    pub fn is_tampered(&self) -> bool {
        self.entry.label == Label::Tampered
    }
}

fn load_item(corpus: &Corpus, e: &ManifestEntry, exec: &Executor<'_>) -> Result<LoadedItem> {
    let image = AnalysisImage::from_bytes(corpus.image_bytes(e)?)?;
    let mask = corpus.mask(e)?;
    let context = Context::new(&image.image, e.manip_type, e.id.clone());
    let maps = exec.pool_maps(&image)?;
    Ok(LoadedItem { entry: e.clone(), image, mask, context, maps })
}

/// Loads (and computes heatmaps for) the entries selected by `filter`, in
/// manifest order.
pub fn load_items(
    corpus: &Corpus,
    exec: &Executor<'_>,
    filter: impl Fn(&ManifestEntry) -> bool + Sync,
) -> Result<Vec<LoadedItem>> {
    corpus
        .manifest
        .items
        .par_iter()
        .filter(|e| filter(e))
        .map(|e| load_item(corpus, e, exec))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecomputeSummary {
    pub images: usize,
    pub modules: usize,
    /// Module runs not served from the cache.
    pub executions: usize,
    pub cache_digest: String,
}

/// Fills the cache with every pool module's heatmap for every corpus image.
pub fn precompute(corpus: &Corpus, registry: &Registry, cache: &HeatmapCache) -> Result<PrecomputeSummary> {
    let exec = Executor::new(registry, Some(cache));
    corpus.manifest.items.par_iter().try_for_each(|e| -> Result<()> {
        let image = AnalysisImage::from_bytes(corpus.image_bytes(e)?)?;
        exec.pool_maps(&image)?;
        Ok(())
    })?;
    Ok(PrecomputeSummary {
        images: corpus.manifest.items.len(),
        modules: registry.active().len(),
        executions: exec.executions(),
        cache_digest: cache.digest()?,
    })
}

/// The candidate set of one image: up to `big_k` sampled paths plus the
/// baselines, seeded by the image content.
pub fn candidates(registry: &Registry, item: &AnalysisImage, params: &RunParams) -> Result<Vec<PathGraph>> {
    sample_paths(registry, params.big_k, image_seed(params.seed, &item.digest))
}

/// Pixel F1 of a heatmap thresholded at 0.5.
pub fn map_f1(map: &Heatmap, mask: &BinaryMask) -> Result<f64> {
    pixel_f1(&localize(map), mask)
}

/// Supervision for the selector: every candidate path of every tampered
/// item, labelled with the pixel F1 of its output.
pub fn training_records(items: &[LoadedItem], registry: &Registry, params: &RunParams) -> Result<Vec<TrainingRecord>> {
    let per_item: Vec<Vec<TrainingRecord>> = items
        .par_iter()
        .filter(|it| it.is_tampered() && !it.mask.is_empty())
        .map(|it| {
            candidates(registry, &it.image, params)?
                .into_iter()
                .map(|p| {
                    let f1 = map_f1(&path_output_from(&it.maps, &p)?, &it.mask)?;
                    TrainingRecord::new(p, it.context.clone(), f1)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_item.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorReport {
    pub train_records: usize,
    pub val_records: usize,
    pub best_epoch: usize,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub val_losses: Vec<f64>,
}

/// Trains the selector on the training split and writes `selector.frck`
/// into `model_dir`.
pub fn train_selector(
    corpus: &Corpus,
    registry: &Registry,
    cache: Option<&HeatmapCache>,
    params: &RunParams,
    cfg: &TrainConfig,
    model_dir: &Path,
) -> Result<SelectorReport> {
    params.validate()?;
    let exec = Executor::new(registry, cache);
    let items = load_items(corpus, &exec, |e| e.label == Label::Tampered)?;
    let (train_items, val_items): (Vec<LoadedItem>, Vec<LoadedItem>) =
        items.into_iter().partition(|it| it.entry.split == Split::Train);
    let train = training_records(&train_items, registry, params)?;
    let val = training_records(&val_items, registry, params)?;
    let outcome = train_with_slots(&train, &val, params.seed, cfg, MODULE_SLOTS)?;
    let report = SelectorReport {
        train_records: train.len(),
        val_records: val.len(),
        best_epoch: outcome.best_epoch,
        initial_val_loss: outcome.initial_val_loss,
        best_val_loss: outcome.best_val_loss(),
        val_losses: outcome.val_losses.clone(),
    };
    let metadata = serde_json::json!({
        "seed": params.seed,
        "big_k": params.big_k,
        "epochs": cfg.epochs,
        "best_epoch": outcome.best_epoch,
        "final_val_loss": report.best_val_loss,
        "pool": registry.active(),
        "train_config": cfg,
    });
    std::fs::create_dir_all(model_dir).map_err(|e| Error::io(model_dir, e))?;
    save_checkpoint(
        &model_dir.join(SELECTOR_FILE),
        &Checkpoint { tensors: outcome.params.to_tensors(), metadata },
    )?;
    Ok(report)
}

pub fn load_selector(model_dir: &Path) -> Result<SelectorParams> {
    let path = model_dir.join(SELECTOR_FILE);
    if !path.exists() {
        return Err(Error::MissingModel(path.display().to_string()));
    }
    SelectorParams::from_checkpoint(&load_checkpoint(&path)?)
}

pub fn load_fusion(model_dir: &Path) -> Result<FusionParams> {
    let path = model_dir.join(FUSION_FILE);
    if !path.exists() {
        return Err(Error::MissingModel(path.display().to_string()));
    }
    FusionParams::from_checkpoint(&load_checkpoint(&path)?)
}

/// Candidate paths of an item ranked by the selector.
pub struct Ranked {
    pub paths: Vec<PathGraph>,
    /// `(candidate index, score)`, best first.
    pub order: Vec<(usize, f64)>,
}

impl Ranked {
    pub fn top(&self, k: usize) -> &[(usize, f64)] {
        &self.order[..k.min(self.order.len())]
    }
}

pub fn rank_item(
    selector: &SelectorParams,
    registry: &Registry,
    image: &AnalysisImage,
    context: &Context,
    params: &RunParams,
) -> Result<Ranked> {
    let paths = candidates(registry, image, params)?;
    let scores = paths.iter().map(|p| selector.forward(p, context)).collect::<Result<Vec<_>>>()?;
    Ok(Ranked { order: rank_scores(&scores), paths })
}

fn topk_sample(item: &LoadedItem, ranked: &Ranked, k: usize) -> Result<FusionSample> {
    let top = ranked.top(k);
    if top.len() < k {
        return Err(Error::NotEnoughCandidates { needed: k, available: top.len() });
    }
    let maps = top
        .iter()
        .map(|&(i, _)| path_output_from(&item.maps, &ranked.paths[i]))
        .collect::<Result<Vec<_>>>()?;
    Ok(FusionSample { maps, scores: top.iter().map(|&(_, s)| s).collect(), mask: item.mask.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub samples: usize,
    pub rank_biases: Vec<f64>,
}

/// Trains the rank biases on the selector's top-k paths of tampered training
/// images and writes `fusion.frck`.
pub fn train_fusion_stage(
    corpus: &Corpus,
    registry: &Registry,
    cache: Option<&HeatmapCache>,
    params: &RunParams,
    cfg: &FusionTrainConfig,
    model_dir: &Path,
) -> Result<FusionReport> {
    params.validate()?;
    let selector = load_selector(model_dir)?;
    let exec = Executor::new(registry, cache);
    let items = load_items(corpus, &exec, |e| e.label == Label::Tampered && e.split == Split::Train)?;
    let samples = fusion_samples(&items, &selector, registry, params)?;
    let fp = train_fusion(&samples, params.small_k, cfg)?;
    let metadata = serde_json::json!({
        "seed": params.seed,
        "big_k": params.big_k,
        "k": params.small_k,
        "epochs": cfg.epochs,
        "train_config": cfg,
    });
    save_checkpoint(&model_dir.join(FUSION_FILE), &Checkpoint { tensors: fp.to_tensors(), metadata })?;
    Ok(FusionReport { samples: samples.len(), rank_biases: fp.rank_biases })
}

pub fn fusion_samples(
    items: &[LoadedItem],
    selector: &SelectorParams,
    registry: &Registry,
    params: &RunParams,
) -> Result<Vec<FusionSample>> {
    items
        .par_iter()
        .filter(|it| it.is_tampered() && !it.mask.is_empty())
        .map(|it| {
            let ranked = rank_item(selector, registry, &it.image, &it.context, params)?;
            topk_sample(it, &ranked, params.small_k)
        })
        .collect()
}

/// Output of analysing one image.
pub struct Analysis {
    pub score: f64,
    pub heatmap: Heatmap,
    pub mask: BinaryMask,
    /// Selected paths with their fusion weights and weighted maps.
    pub contributions: Vec<Contribution>,
}

pub struct Contribution {
    pub path: PathGraph,
    pub score: f64,
    pub weight: f64,
    pub map: Heatmap,
}

pub fn analyze(
    bytes: Vec<u8>,
    manip: ManipType,
    registry: &Registry,
    cache: Option<&HeatmapCache>,
    params: &RunParams,
    model_dir: &Path,
) -> Result<Analysis> {
    params.validate()?;
    let selector = load_selector(model_dir)?;
    let fusion = load_fusion(model_dir)?;
    if fusion.k() < params.small_k {
        return Err(Error::InvalidArgument(format!(
            "fusion model was trained for k = {}, asked for k = {}",
            fusion.k(),
            params.small_k
        )));
    }
    let image = AnalysisImage::from_bytes(bytes)?;
    let context = Context::new(&image.image, manip, image.digest.clone());
    let exec = Executor::new(registry, cache);
    let ranked = rank_item(&selector, registry, &image, &context, params)?;
    let top = ranked.top(params.small_k).to_vec();
    if top.len() < params.small_k {
        return Err(Error::NotEnoughCandidates { needed: params.small_k, available: top.len() });
    }
    let maps = top
        .iter()
        .map(|&(i, _)| exec.path_output(&ranked.paths[i], &image))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = top.iter().map(|&(_, s)| s).collect();
    let weights = fusion.weights(&scores)?;
    let refs: Vec<&Heatmap> = maps.iter().collect();
    let heatmap = weighted_sum(&refs, &weights)?;
    let contributions = top
        .iter()
        .zip(maps)
        .zip(&weights)
        .map(|((&(i, s), m), &w)| {
            let scaled = m.values().iter().map(|v| (f64::from(*v) * w) as f32).collect();
            Ok(Contribution { path: ranked.paths[i].clone(), score: s, weight: w, map: Heatmap::new(m.width(), m.height(), scaled)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Analysis { score: detection_score(&heatmap), mask: localize(&heatmap), heatmap, contributions })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    BestSingle,
    UniformAll,
    RandomK,
    HeuristicK,
    Top1,
    TopKUniform,
    TopKSoftmax,
    TopKLearned,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::BestSingle,
        Variant::UniformAll,
        Variant::RandomK,
        Variant::HeuristicK,
        Variant::Top1,
        Variant::TopKUniform,
        Variant::TopKSoftmax,
        Variant::TopKLearned,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::BestSingle => "best-single",
            Variant::UniformAll => "uniform-all",
            Variant::RandomK => "random-k",
            Variant::HeuristicK => "heuristic-k",
            Variant::Top1 => "top-1",
            Variant::TopKUniform => "top-k-uniform",
            Variant::TopKSoftmax => "top-k-softmax",
            Variant::TopKLearned => "top-k-learned",
        }
    }

    fn needs_selector(self) -> bool {
        matches!(self, Variant::Top1 | Variant::TopKUniform | Variant::TopKSoftmax | Variant::TopKLearned)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant '{s}'")))
    }
}

/// Modules the heuristic prefers: compression-history cues for JPEG input,
/// pixel-domain cues otherwise.
pub fn heuristic_family(registry: &Registry, is_jpeg: bool) -> Vec<ModuleId> {
    registry
        .active()
        .iter()
        .copied()
        .filter(|&id| ModuleKind::from_id(id).is_some_and(|k| k.is_compression_cue() == is_jpeg))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: Variant,
    pub det_auc: Option<f64>,
    pub loc_f1: f64,
    pub miou: f64,
    pub accuracy: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub corpus_digest: String,
    pub seed: u64,
    pub big_k: usize,
    pub small_k: usize,
    pub best_single_module: Option<String>,
    pub val_images: usize,
    pub val_tampered: usize,
    pub rows: Vec<VariantRow>,
}

impl EvalReport {
    pub fn row(&self, v: Variant) -> Option<&VariantRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    /// Rows without wall times, for comparing runs.
    pub fn without_timing(&self) -> EvalReport {
        let mut r = self.clone();
        r.rows.iter_mut().for_each(|row| row.wall_time_s = 0.0);
        r
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "corpus {} seed {} K={} k={} val images {} ({} tampered)\n",
            &self.corpus_digest[..12.min(self.corpus_digest.len())],
            self.seed,
            self.big_k,
            self.small_k,
            self.val_images,
            self.val_tampered
        );
        if let Some(m) = &self.best_single_module {
            s += &format!("best single module (train split): {m}\n");
        }
        s += &format!("{:<15} {:>8} {:>8} {:>8} {:>8} {:>9}\n", "variant", "Det.AUC", "Loc.F1", "mIoU", "Acc", "time[s]");
        for r in &self.rows {
            let auc = r.det_auc.map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
            s += &format!(
                "{:<15} {:>8} {:>8.4} {:>8.4} {:>8.4} {:>9.3}\n",
                r.variant.name(),
                auc,
                r.loc_f1,
                r.miou,
                r.accuracy,
                r.wall_time_s
            );
        }
        s
    }
}

/// Shared inputs of a benchmark run.
pub struct BenchmarkSetup<'a> {
    pub corpus: &'a Corpus,
    pub registry: &'a Registry,
    pub cache: Option<&'a HeatmapCache>,
    pub params: RunParams,
    pub selector: Option<SelectorParams>,
    pub fusion: Option<FusionParams>,
}

impl<'a> BenchmarkSetup<'a> {
    /// Loads whichever models exist in `model_dir`.
    pub fn new(
        corpus: &'a Corpus,
        registry: &'a Registry,
        cache: Option<&'a HeatmapCache>,
        params: RunParams,
        model_dir: &Path,
    ) -> Result<Self> {
        let selector = model_dir.join(SELECTOR_FILE).exists().then(|| load_selector(model_dir)).transpose()?;
        let fusion = model_dir.join(FUSION_FILE).exists().then(|| load_fusion(model_dir)).transpose()?;
        Ok(Self { corpus, registry, cache, params, selector, fusion })
    }
}

/// Best module by mean pixel F1 over tampered training images.
pub fn best_single_module(items: &[LoadedItem], registry: &Registry) -> Result<ModuleId> {
    let tampered: Vec<&LoadedItem> = items.iter().filter(|it| it.is_tampered() && !it.mask.is_empty()).collect();
    if tampered.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut best: Option<(ModuleId, f64)> = None;
    for &id in registry.active() {
        let mut total = 0.0;
        for it in &tampered {
            let map = &it.maps.iter().find(|(m, _)| *m == id).ok_or(Error::UnknownModuleId(id))?.1;
            total += map_f1(map, &it.mask)?;
        }
        let mean = total / tampered.len() as f64;
        if best.is_none_or(|(_, b)| mean > b) {
            best = Some((id, mean));
        }
    }
    Ok(best.expect("pool is non-empty").0)
}

fn uniform(maps: &[Heatmap]) -> Result<Heatmap> {
    intra_path_fuse(&maps.iter().collect::<Vec<_>>())
}

/// Fused heatmap of one variant on one item.
fn variant_map(
    v: Variant,
    item: &LoadedItem,
    setup: &BenchmarkSetup<'_>,
    best_single: Option<ModuleId>,
    ranked: Option<&Ranked>,
    sampled: &[PathGraph],
) -> Result<Heatmap> {
    let k = setup.params.small_k;
    let topk = || -> Result<FusionSample> { topk_sample(item, ranked.expect("selector present"), k) };
    match v {
        Variant::BestSingle => path_output_from(&item.maps, &PathGraph::single(best_single.expect("chosen on train"))),
        Variant::UniformAll => path_output_from(&item.maps, &PathGraph::new(setup.registry.active().to_vec())?),
        Variant::RandomK => {
            let maps = sampled.iter().map(|p| path_output_from(&item.maps, p)).collect::<Result<Vec<_>>>()?;
            uniform(&maps)
        }
        Variant::HeuristicK => {
            let family = heuristic_family(setup.registry, item.image.image.source_format() == crate::image_io::SourceFormat::Jpeg);
            let within: Vec<&PathGraph> = sampled.iter().filter(|p| p.nodes().iter().all(|n| family.contains(n))).collect();
            if within.is_empty() {
                let family = if family.is_empty() { setup.registry.active().to_vec() } else { family };
                path_output_from(&item.maps, &PathGraph::new(family)?)
            } else {
                let maps = within.iter().map(|p| path_output_from(&item.maps, p)).collect::<Result<Vec<_>>>()?;
                uniform(&maps)
            }
        }
        Variant::Top1 => {
            let r = ranked.expect("selector present");
            path_output_from(&item.maps, &r.paths[r.order[0].0])
        }
        Variant::TopKUniform => uniform(&topk()?.maps),
        Variant::TopKSoftmax => {
            let s = topk()?;
            fuse(&s.maps.iter().collect::<Vec<_>>(), &s.scores, &FusionParams::zeros(k))
        }
        Variant::TopKLearned => {
            let s = topk()?;
            fuse(&s.maps.iter().collect::<Vec<_>>(), &s.scores, setup.fusion.as_ref().expect("fusion present"))
        }
    }
}

struct ItemScores {
    tampered: bool,
    /// Per variant: (detection score, loc F1, mIoU, seconds).
    values: Vec<(f64, f64, f64, f64)>,
}

/// Evaluates the requested variants on the validation split. Heatmaps come
/// from the cache when available, so every module runs at most once per
/// image regardless of how many variants are requested.
pub fn run_benchmark(setup: &BenchmarkSetup<'_>, variants: &[Variant]) -> Result<EvalReport> {
    setup.params.validate()?;
    let mut variants = variants.to_vec();
    variants.sort();
    variants.dedup();
    if variants.is_empty() {
        return Err(Error::InvalidArgument("no variants requested".into()));
    }
    if variants.iter().any(|v| v.needs_selector()) && setup.selector.is_none() {
        return Err(Error::MissingModel(SELECTOR_FILE.into()));
    }
    if variants.contains(&Variant::TopKLearned) {
        match &setup.fusion {
            None => return Err(Error::MissingModel(FUSION_FILE.into())),
            Some(f) if f.k() != setup.params.small_k => {
                return Err(Error::InvalidArgument(format!(
                    "fusion model has k = {}, benchmark asks for k = {}",
                    f.k(),
                    setup.params.small_k
                )))
            }
            _ => {}
        }
    }
    let exec = Executor::new(setup.registry, setup.cache);
    let best_single = if variants.contains(&Variant::BestSingle) {
        let train = load_items(setup.corpus, &exec, |e| e.split == Split::Train && e.label == Label::Tampered)?;
        Some(best_single_module(&train, setup.registry)?)
    } else {
        None
    };
    let val_entries: Vec<&ManifestEntry> = setup.corpus.manifest.split(Split::Val).collect();
    if val_entries.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let per_item: Vec<ItemScores> = val_entries
        .par_iter()
        .map(|e| -> Result<ItemScores> {
            let item = load_item(setup.corpus, e, &exec)?;
            let ranked = match &setup.selector {
                Some(sel) if variants.iter().any(|v| v.needs_selector()) => {
                    Some(rank_item(sel, setup.registry, &item.image, &item.context, &setup.params)?)
                }
                _ => None,
            };
            let sampled = random_k_paths(setup.registry, &item.image, &setup.params)?;
            let values = variants
                .iter()
                .map(|&v| {
                    let start = Instant::now();
                    let map = variant_map(v, &item, setup, best_single, ranked.as_ref(), &sampled)?;
                    let pred = localize(&map);
                    let f1 = pixel_f1(&pred, &item.mask)?;
                    let iou = miou(&pred, &item.mask)?;
                    Ok((detection_score(&map), f1, iou, start.elapsed().as_secs_f64()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ItemScores { tampered: item.is_tampered(), values })
        })
        .collect::<Result<_>>()?;
    let labels: Vec<bool> = per_item.iter().map(|s| s.tampered).collect();
    let n_tampered = labels.iter().filter(|&&t| t).count();
    let rows = variants
        .iter()
        .enumerate()
        .map(|(vi, &v)| {
            let det: Vec<f64> = per_item.iter().map(|s| s.values[vi].0).collect();
            let loc = per_item.iter().filter(|s| s.tampered);
            let denom = n_tampered.max(1) as f64;
            VariantRow {
                variant: v,
                det_auc: roc_auc(&det, &labels).ok(),
                loc_f1: loc.clone().map(|s| s.values[vi].1).sum::<f64>() / denom,
                miou: loc.map(|s| s.values[vi].2).sum::<f64>() / denom,
                accuracy: accuracy(&det, &labels, 0.5),
                wall_time_s: per_item.iter().map(|s| s.values[vi].3).sum(),
            }
        })
        .collect();
    Ok(EvalReport {
        corpus_digest: setup.corpus.manifest.digest(),
        seed: setup.params.seed,
        big_k: setup.params.big_k,
        small_k: setup.params.small_k,
        best_single_module: best_single
            .map(|id| ModuleKind::from_id(id).map_or_else(|| id.to_string(), |k| k.name().to_string())),
        val_images: per_item.len(),
        val_tampered: n_tampered,
        rows,
    })
}

/// The `big_k` sampled paths of the candidate set, without the appended
/// baselines.
fn random_k_paths(registry: &Registry, image: &AnalysisImage, params: &RunParams) -> Result<Vec<PathGraph>> {
    let mut paths = candidates(registry, image, params)?;
    paths.truncate(params.big_k);
    Ok(paths)
}

/// Default cache location: `FRAME_CACHE_DIR` when set.
pub fn cache_dir_from_env(default: Option<PathBuf>) -> Option<PathBuf> {
    std::env::var_os("FRAME_CACHE_DIR").map(PathBuf::from).or(default)
}

/// Mean pixel F1 of each module over the tampered items, by manipulation type.
pub fn module_f1_by_type(items: &[LoadedItem]) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    let mut sums: BTreeMap<String, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    for it in items.iter().filter(|it| it.is_tampered()) {
        for (id, map) in &it.maps {
            let name = ModuleKind::from_id(*id).map_or_else(|| id.to_string(), |k| k.name().to_string());
            let e = sums.entry(it.entry.manip_type.to_string()).or_default().entry(name).or_insert((0.0, 0));
            e.0 += map_f1(map, &it.mask)?;
            e.1 += 1;
        }
    }
    Ok(sums
        .into_iter()
        .map(|(t, m)| (t, m.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()))
        .collect())
}
