use std::path::Path;

use frame_core::cache::HeatmapCache;
use frame_core::features::ManipType;
use frame_core::forensics::Registry;
use frame_core::fusion::{FusionParams, FusionTrainConfig};
use frame_core::mask::BinaryMask;
use frame_core::pipeline::{
    analyze, map_f1, precompute, run_benchmark, train_fusion_stage, train_selector, BenchmarkSetup, RunParams,
    Variant,
};
use frame_core::selector::TrainConfig;
use frame_core::supernet::{path_output_from, PathGraph};
use frame_core::synth::{build_corpus, Corpus};
use frame_core::{Error, Heatmap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quick() -> TrainConfig {
    TrainConfig { epochs: 3, ..TrainConfig::default() }
}

fn trained(root: &Path) -> Corpus {
    build_corpus(16, 16, 0, &root.join("corpus")).unwrap();
    let corpus = Corpus::open(&root.join("corpus")).unwrap();
    let reg = Registry::default_pool();
    let cache = HeatmapCache::new(root.join("cache"));
    precompute(&corpus, &reg, &cache).unwrap();
    let params = RunParams::default();
    train_selector(&corpus, &reg, Some(&cache), &params, &quick(), &root.join("model")).unwrap();
    train_fusion_stage(&corpus, &reg, Some(&cache), &params, &FusionTrainConfig::default(), &root.join("model"))
        .unwrap();
    corpus
}

#[test]
fn benchmark_is_deterministic_and_cache_transparent() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = trained(dir.path());
    let reg = Registry::default_pool();
    let model = dir.path().join("model");
    let cache = HeatmapCache::new(dir.path().join("cache"));
    let warm = BenchmarkSetup::new(&corpus, &reg, Some(&cache), RunParams::default(), &model).unwrap();
    let a = run_benchmark(&warm, &Variant::ALL).unwrap();
    let b = run_benchmark(&warm, &Variant::ALL).unwrap();
    assert_eq!(a.without_timing(), b.without_timing());
    let none = BenchmarkSetup::new(&corpus, &reg, None, RunParams::default(), &model).unwrap();
    assert_eq!(run_benchmark(&none, &Variant::ALL).unwrap().without_timing(), a.without_timing());
    assert_eq!(a.rows.len(), Variant::ALL.len());
    for r in &a.rows {
        assert!((0.0..=1.0).contains(&r.loc_f1) && (0.0..=1.0).contains(&r.miou) && (0.0..=1.0).contains(&r.accuracy));
    }
    let json = serde_json::to_string(&a).unwrap();
    assert!(json.contains("\"top-k-learned\""));
    assert!(a.to_text().contains("uniform-all"));
}

#[test]
fn benchmark_runs_each_module_once_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = trained(dir.path());
    let reg = Registry::default_pool();
    let cold_dir = tempfile::tempdir().unwrap();
    let cold = HeatmapCache::new(cold_dir.path());
    let setup = BenchmarkSetup::new(&corpus, &reg, Some(&cold), RunParams::default(), &dir.path().join("model")).unwrap();
    run_benchmark(&setup, &Variant::ALL).unwrap();
    let summary = precompute(&corpus, &reg, &cold).unwrap();
    // everything the benchmark touched is already cached; precompute fills only the rest
    let entries = walk(cold_dir.path());
    assert!(entries <= corpus.manifest.items.len() * reg.active().len());
    assert_eq!(entries, summary.images * summary.modules - zero_maps(&corpus));
}

fn walk(p: &Path) -> usize {
    std::fs::read_dir(p)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            if e.file_type().unwrap().is_dir() {
                walk(&e.path())
            } else {
                1
            }
        })
        .sum()
}

/// Coefficient modules on PNG input give zero maps that are not cached.
fn zero_maps(corpus: &Corpus) -> usize {
    let coefficient_modules = 2;
    corpus.manifest.items.iter().filter(|e| e.image.ends_with(".png")).count() * coefficient_modules
}

#[test]
fn top1_equals_learned_fusion_with_one_path() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = trained(dir.path());
    let reg = Registry::default_pool();
    let mut setup = BenchmarkSetup::new(
        &corpus,
        &reg,
        None,
        RunParams { big_k: 50, small_k: 1, seed: 0 },
        &dir.path().join("model"),
    )
    .unwrap();
    setup.fusion = Some(FusionParams::zeros(1));
    let r = run_benchmark(&setup, &[Variant::Top1, Variant::TopKLearned]).unwrap();
    let (a, b) = (r.row(Variant::Top1).unwrap(), r.row(Variant::TopKLearned).unwrap());
    assert_eq!((a.loc_f1, a.miou, a.det_auc), (b.loc_f1, b.miou, b.det_auc));
}

#[test]
fn missing_models_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    build_corpus(4, 4, 0, &dir.path().join("c")).unwrap();
    let corpus = Corpus::open(&dir.path().join("c")).unwrap();
    let reg = Registry::default_pool();
    let setup = BenchmarkSetup::new(&corpus, &reg, None, RunParams::default(), &dir.path().join("none")).unwrap();
    assert!(matches!(run_benchmark(&setup, &[Variant::Top1]), Err(Error::MissingModel(_))));
    assert!(run_benchmark(&setup, &[Variant::UniformAll, Variant::RandomK]).is_ok());
    let bytes = std::fs::read(dir.path().join("c").join(&corpus.manifest.items[0].image)).unwrap();
    assert!(matches!(
        analyze(bytes, ManipType::Unknown, &reg, None, &RunParams::default(), &dir.path().join("none")),
        Err(Error::MissingModel(_))
    ));
}

#[test]
fn analysis_outputs_match_image_size() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = trained(dir.path());
    let reg = Registry::default_pool();
    let e = &corpus.manifest.items[0];
    let bytes = corpus.image_bytes(e).unwrap();
    let params = RunParams::default();
    let a = analyze(bytes.clone(), ManipType::Splicing, &reg, None, &params, &dir.path().join("model")).unwrap();
    let dims = (e.width as usize, e.height as usize);
    assert_eq!(a.heatmap.dims(), dims);
    assert_eq!(a.mask.dims(), dims);
    assert_eq!(a.contributions.len(), params.small_k);
    let total: f64 = a.contributions.iter().map(|c| c.weight).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let b = analyze(bytes, ManipType::Splicing, &reg, None, &params, &dir.path().join("model")).unwrap();
    assert_eq!(a.heatmap, b.heatmap);
    assert!((0.0..=1.0).contains(&a.score));
}

#[test]
fn averaging_dilutes_a_perfect_module() {
    // one module reproduces the mask, six emit noise
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (w, h) = (32, 32);
    let mut single = 0.0;
    let mut uniform = 0.0;
    for _ in 0..10 {
        let (x0, y0) = (rng.gen_range(0..16), rng.gen_range(0..16));
        let mask = BinaryMask::new(w, h, (0..w * h).map(|i| (x0..x0 + 12).contains(&(i % w)) && (y0..y0 + 12).contains(&(i / w))).collect()).unwrap();
        let perfect = Heatmap::new(w, h, mask.data().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()).unwrap();
        let mut maps = vec![(0u16, perfect)];
        for id in 1..7u16 {
            maps.push((id, Heatmap::new(w, h, (0..w * h).map(|_| rng.gen_range(0.0f32..1.0)).collect()).unwrap()));
        }
        single += map_f1(&path_output_from(&maps, &PathGraph::single(0)).unwrap(), &mask).unwrap();
        let all = PathGraph::new((0..7).collect()).unwrap();
        uniform += map_f1(&path_output_from(&maps, &all).unwrap(), &mask).unwrap();
    }
    assert!(uniform < single);
}

#[test]
fn run_params_are_validated() {
    assert!(RunParams { big_k: 3, small_k: 5, seed: 0 }.validate().is_err());
    assert!(RunParams { big_k: 5, small_k: 0, seed: 0 }.validate().is_err());
    assert!(RunParams::default().validate().is_ok());
    assert_eq!("top-k-learned".parse::<Variant>().unwrap(), Variant::TopKLearned);
}
