//! `frame`: corpus synthesis, precompute, training, analysis, benchmarking
//! and theory verification.
//!
//! Exit status: 0 on success, 1 on an operational error (or a failed
//! verification), 2 on a usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};

use frame_core::cache::HeatmapCache;
use frame_core::features::ManipType;
use frame_core::forensics::{ModuleKind, Registry};
use frame_core::fusion::FusionTrainConfig;
use frame_core::image_io::encode_png_gray;
use frame_core::pipeline::{
    analyze, precompute, run_benchmark, train_fusion_stage, train_selector, BenchmarkSetup, RunParams, Variant,
    DEFAULT_BIG_K, DEFAULT_SMALL_K,
};
use frame_core::selector::TrainConfig;
use frame_core::synth::{build_corpus, Corpus};
use frame_core::theory::{TheoryConfig, TheoryReport};
use frame_core::Heatmap;

#[derive(Parser, Debug)]
#[command(name = "frame", version, about = "Adaptive selection and fusion of image-forensics modules")]
struct Cli {
    /// Worker threads for per-image work (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Comma-separated module pool (default: every implemented module).
    #[arg(long, global = true, value_delimiter = ',')]
    pool: Option<Vec<ModuleKind>>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labelled synthetic corpus.
    Synth {
        #[arg(long)]
        n_tampered: usize,
        #[arg(long)]
        n_authentic: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the module pool over a corpus and fill the heatmap cache.
    Precompute {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        cache: CacheArg,
    },
    /// Fit the path selector on the training split.
    TrainSelector {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        cache: CacheArg,
        #[arg(long = "K", default_value_t = DEFAULT_BIG_K)]
        big_k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = TrainConfig::default().epochs)]
        epochs: usize,
        /// Model directory to write.
        #[arg(long)]
        out_model: PathBuf,
    },
    /// Fit the rank-wise fusion weights on top of a trained selector.
    TrainFusion {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        cache: CacheArg,
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "K", default_value_t = DEFAULT_BIG_K)]
        big_k: usize,
        #[arg(long = "k", default_value_t = DEFAULT_SMALL_K)]
        small_k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = FusionTrainConfig::default().epochs)]
        epochs: usize,
    },
    /// Analyse one image.
    Analyze {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        cache: CacheArg,
        #[arg(long = "K", default_value_t = DEFAULT_BIG_K)]
        big_k: usize,
        #[arg(long = "k", default_value_t = DEFAULT_SMALL_K)]
        small_k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_heatmap: PathBuf,
        #[arg(long)]
        out_mask: PathBuf,
        /// Directory for per-path contribution maps (default: next to the heatmap).
        #[arg(long)]
        out_contrib: Option<PathBuf>,
        #[arg(long, default_value = "unknown")]
        manip_type: ManipType,
    },
    /// Evaluate the selection and fusion variants on the validation split.
    Benchmark {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        cache: CacheArg,
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = Variant::ALL.map(|v| v.to_string()))]
        variants: Vec<String>,
        #[arg(long = "K", default_value_t = DEFAULT_BIG_K)]
        big_k: usize,
        #[arg(long = "k", default_value_t = DEFAULT_SMALL_K)]
        small_k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON report path; the text table is written next to it as `.txt`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Monte-Carlo check of the regret and improvement bounds.
    Theory {
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        c0: f64,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.5)]
        p_avg: f64,
        #[arg(long, default_value_t = 0.2)]
        gamma_avg: f64,
        #[arg(long, default_value_t = 0.5)]
        p_bs: f64,
        #[arg(long, default_value_t = 0.2)]
        gamma_bs: f64,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        candidates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct CacheArg {
    /// Heatmap cache directory.
    #[arg(long, env = "FRAME_CACHE_DIR")]
    cache: Option<PathBuf>,
}

impl CacheArg {
    fn open(&self) -> Option<HeatmapCache> {
        self.cache.as_ref().map(HeatmapCache::new)
    }
}

fn registry(pool: &Option<Vec<ModuleKind>>) -> Result<Registry> {
    Ok(match pool {
        Some(kinds) => Registry::with_active(kinds)?,
        None => Registry::default_pool(),
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn heatmap_png(map: &Heatmap) -> Result<Vec<u8>> {
    Ok(encode_png_gray(map.width() as u32, map.height() as u32, &map.to_gray_u8())?)
}

/// Writes `<report>` as JSON and `<report>.txt` with the table.
fn write_report(path: &Path, json: &serde_json::Value, text: &str) -> Result<()> {
    write(path, &serde_json::to_vec_pretty(json)?)?;
    write(&path.with_extension("txt"), text.as_bytes())
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    let pool = registry(&cli.pool)?;
    match cli.command {
        Command::Synth { n_tampered, n_authentic, seed, out } => {
            let m = build_corpus(n_tampered, n_authentic, seed, &out)?;
            println!("wrote {} items to {} (manifest {})", m.items.len(), out.display(), m.digest());
        }
        Command::Precompute { corpus, cache } => {
            let Some(cache) = cache.open() else { bail!("precompute needs --cache or FRAME_CACHE_DIR") };
            let s = precompute(&Corpus::open(&corpus)?, &pool, &cache)?;
            println!(
                "{} images x {} modules, {} computed, cache digest {}",
                s.images, s.modules, s.executions, s.cache_digest
            );
        }
        Command::TrainSelector { corpus, cache, big_k, seed, epochs, out_model } => {
            let params = RunParams { big_k, small_k: 1, seed };
            let cfg = TrainConfig { epochs, ..TrainConfig::default() };
            let r = train_selector(&Corpus::open(&corpus)?, &pool, cache.open().as_ref(), &params, &cfg, &out_model)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::TrainFusion { corpus, cache, model, big_k, small_k, seed, epochs } => {
            let params = RunParams { big_k, small_k, seed };
            let cfg = FusionTrainConfig { epochs, ..FusionTrainConfig::default() };
            let r = train_fusion_stage(&Corpus::open(&corpus)?, &pool, cache.open().as_ref(), &params, &cfg, &model)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Analyze { image, model, cache, big_k, small_k, seed, out_heatmap, out_mask, out_contrib, manip_type } => {
            let bytes = fs::read(&image).with_context(|| format!("reading {}", image.display()))?;
            let params = RunParams { big_k, small_k, seed };
            let a = analyze(bytes, manip_type, &pool, cache.open().as_ref(), &params, &model)?;
            write(&out_heatmap, &heatmap_png(&a.heatmap)?)?;
            write(&out_mask, &a.mask.to_png()?)?;
            let dir = out_contrib
                .unwrap_or_else(|| out_heatmap.parent().map(Path::to_path_buf).unwrap_or_default());
            let stem = out_heatmap.file_stem().and_then(|s| s.to_str()).unwrap_or("heatmap");
            let mut paths = Vec::new();
            for (rank, c) in a.contributions.iter().enumerate() {
                let file = dir.join(format!("{stem}_rank{}_{}.png", rank + 1, c.path.key().replace('>', "-")));
                write(&file, &heatmap_png(&c.map)?)?;
                paths.push(serde_json::json!({
                    "rank": rank + 1,
                    "path": c.path.key(),
                    "score": c.score,
                    "weight": c.weight,
                    "map": file.display().to_string(),
                }));
            }
            println!("detection score: {:.6}", a.score);
            println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "score": a.score, "paths": paths }))?);
        }
        Command::Benchmark { corpus, model, cache, variants, big_k, small_k, seed, report } => {
            let variants = variants.iter().map(|v| v.parse::<Variant>()).collect::<Result<Vec<_>, _>>()?;
            let corpus = Corpus::open(&corpus)?;
            let cache = cache.open();
            let params = RunParams { big_k, small_k, seed };
            let setup = BenchmarkSetup::new(&corpus, &pool, cache.as_ref(), params, &model)?;
            let r = run_benchmark(&setup, &variants)?;
            let text = r.to_text();
            print!("{text}");
            if let Some(path) = report {
                write_report(&path, &serde_json::to_value(&r)?, &text)?;
            }
        }
        Command::Theory { alpha, c0, epsilon, p_avg, gamma_avg, p_bs, gamma_bs, n, candidates, seed, report } => {
            let cfg = TheoryConfig {
                alpha,
                c0,
                epsilon,
                p_avg,
                gamma_avg,
                p_bs,
                gamma_bs,
                n_contexts: n,
                n_candidates: candidates,
                seed,
            };
            let r = TheoryReport::run(&cfg)?;
            let text = r.to_text();
            print!("{text}");
            if let Some(path) = report {
                write_report(&path, &serde_json::to_value(&r)?, &text)?;
            }
            if !r.passed() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
