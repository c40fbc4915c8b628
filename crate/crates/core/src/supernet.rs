//! Candidate analysis paths over the module pool and their execution.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{content_digest, CacheKey, HeatmapCache};
use crate::error::{Error, Result};
use crate::forensics::{run_module, ModuleId, ModuleKind, Registry};
use crate::heatmap::Heatmap;
use crate::image_io::{decode_image, ImageBuffer};

/// Longest path the sampler draws.
pub const MAX_PATH_LEN: usize = 4;
/// Node capacity of a path graph. Sampled paths stay within
/// [`MAX_PATH_LEN`]; the extra room holds the uniform-all baseline.
pub const MAX_GRAPH_NODES: usize = 8;

/// Sampling attempts allowed for `k` requested paths: ten per path plus a
/// fixed allowance of 100 (600 for `k = 50`).
pub fn attempt_budget(k: usize) -> usize {
    10 * k + 100
}

/// An ordered chain of distinct modules.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<ModuleId>", into = "Vec<ModuleId>")]
pub struct PathGraph {
    nodes: Vec<ModuleId>,
}

impl PathGraph {
    pub fn new(nodes: Vec<ModuleId>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() > MAX_GRAPH_NODES {
            return Err(Error::InvalidPath(format!("{} nodes (allowed 1..={MAX_GRAPH_NODES})", nodes.len())));
        }
        for (i, n) in nodes.iter().enumerate() {
            if nodes[..i].contains(n) {
                return Err(Error::InvalidPath(format!("module {n} repeated")));
            }
        }
        Ok(Self { nodes })
    }

    pub fn single(id: ModuleId) -> Self {
        Self { nodes: vec![id] }
    }

    pub fn nodes(&self) -> &[ModuleId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Chain edges `(nodes[i], nodes[i + 1])`.
    pub fn edges(&self) -> impl Iterator<Item = (ModuleId, ModuleId)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1]))
    }

    /// Module names joined by `>`, e.g. `ELA>NOI1`.
    pub fn key(&self) -> String {
        self.nodes
            .iter()
            .map(|&id| ModuleKind::from_id(id).map_or_else(|| id.to_string(), |k| k.name().to_string()))
            .collect::<Vec<_>>()
            .join(">")
    }

    pub fn parse(key: &str) -> Result<Self> {
        let nodes = key
            .split('>')
            .map(|n| n.trim().parse::<ModuleKind>().map(|k| k.id()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(nodes)
    }
}

impl TryFrom<Vec<ModuleId>> for PathGraph {
    type Error = Error;

    fn try_from(nodes: Vec<ModuleId>) -> Result<Self> {
        Self::new(nodes)
    }
}

impl From<PathGraph> for Vec<ModuleId> {
    fn from(p: PathGraph) -> Self {
        p.nodes
    }
}

impl fmt::Display for PathGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Single-module paths for every active module, then the uniform-all path.
pub fn baseline_paths(pool: &Registry) -> Result<Vec<PathGraph>> {
    let active = pool.active();
    if active.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut out: Vec<PathGraph> = active.iter().map(|&id| PathGraph::single(id)).collect();
    if active.len() > 1 {
        out.push(PathGraph::new(active.to_vec())?);
    }
    Ok(out)
}

/// Draws up to `k` distinct random chains (length uniform in 1..=4, modules
/// uniform without replacement), then appends any missing baseline paths.
///
/// The draw sequence depends only on the seed, so a smaller `k` yields a
/// prefix of the paths a larger `k` would.
pub fn sample_paths(pool: &Registry, k: usize, seed: u64) -> Result<Vec<PathGraph>> {
    let active = pool.active();
    if active.is_empty() {
        return Err(Error::EmptyPool);
    }
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut paths: Vec<PathGraph> = Vec::with_capacity(k + active.len() + 1);
    for _ in 0..attempt_budget(k) {
        if paths.len() >= k {
            break;
        }
        let len = rng.gen_range(1..=MAX_PATH_LEN);
        if len > active.len() {
            continue;
        }
        let nodes: Vec<ModuleId> = active.choose_multiple(&mut rng, len).copied().collect();
        let path = PathGraph::new(nodes)?;
        if !paths.contains(&path) {
            paths.push(path);
        }
    }
    for b in baseline_paths(pool)? {
        if !paths.contains(&b) {
            paths.push(b);
        }
    }
    Ok(paths)
}

/// Seed for an image's candidate set.
pub fn image_seed(seed: u64, image_digest: &str) -> u64 {
    let d = content_digest(format!("{seed}:{image_digest}").as_bytes());
    u64::from_str_radix(&d[..16], 16).expect("hex digest")
}

/// Per-pixel mean of equally sized heatmaps.
pub fn intra_path_fuse(outputs: &[&Heatmap]) -> Result<Heatmap> {
    let first = outputs.first().ok_or(Error::EmptyInput)?;
    let (w, h) = first.dims();
    if let Some(bad) = outputs.iter().find(|m| m.dims() != (w, h)) {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", bad.dims(), (w, h))));
    }
    let n = outputs.len() as f64;
    let values = (0..w * h)
        .map(|i| (outputs.iter().map(|m| f64::from(m.values()[i])).sum::<f64>() / n) as f32)
        .collect();
    Heatmap::new(w, h, values)
}

/// An image prepared for analysis: pixels, original bytes when available,
/// and the content digest used for cache keys.
#[derive(Clone, Debug)]
pub struct AnalysisImage {
    pub image: ImageBuffer,
    pub bytes: Option<Vec<u8>>,
    pub digest: String,
}

impl AnalysisImage {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        let image = decode_image(&bytes)?;
        let digest = content_digest(&bytes);
        Ok(Self { image, bytes: Some(bytes), digest })
    }

    /// An in-memory image without a file behind it.
    pub fn from_image(image: ImageBuffer) -> Self {
        let digest = content_digest(image.data());
        Self { image, bytes: None, digest }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.image.width() as usize, self.image.height() as usize)
    }
}

/// Runs modules and paths, consulting the heatmap cache first.
pub struct Executor<'a> {
    registry: &'a Registry,
    cache: Option<&'a HeatmapCache>,
    executions: AtomicUsize,
}

impl<'a> Executor<'a> {
    pub fn new(registry: &'a Registry, cache: Option<&'a HeatmapCache>) -> Self {
        Self { registry, cache, executions: AtomicUsize::new(0) }
    }

    pub fn registry(&self) -> &Registry {
        self.registry
    }

    /// Module runs that were not served from the cache.
    pub fn executions(&self) -> usize {
        self.executions.load(Ordering::Relaxed)
    }

    /// One module's heatmap. Coefficient modules that cannot run on this
    /// input (no JPEG bytes, or a JPEG without coefficient access) give an
    /// all-zero map.
    pub fn module_map(&self, id: ModuleId, img: &AnalysisImage) -> Result<Heatmap> {
        let desc = self.registry.descriptor(id)?;
        let key = CacheKey { image_digest: img.digest.clone(), module_id: id, param_digest: desc.param_digest.clone() };
        if let Some(hit) = self.cache.and_then(|c| c.get(&key)) {
            if hit.dims() == img.dims() {
                return Ok(hit);
            }
        }
        let (w, h) = img.dims();
        let map = match run_module(desc, &img.image, img.bytes.as_deref()) {
            Ok(m) => m,
            Err(Error::JpegRequired(_) | Error::UnsupportedJpeg(_)) => return Ok(Heatmap::zeros(w, h)),
            Err(e) => return Err(e),
        };
        self.executions.fetch_add(1, Ordering::Relaxed);
        if let Some(c) = self.cache {
            c.put(&key, &map)?;
        }
        Ok(map)
    }

    /// Every active module's heatmap, in pool order.
    pub fn pool_maps(&self, img: &AnalysisImage) -> Result<Vec<(ModuleId, Heatmap)>> {
        self.registry.active().iter().map(|&id| Ok((id, self.module_map(id, img)?))).collect()
    }

    pub fn path_output(&self, path: &PathGraph, img: &AnalysisImage) -> Result<Heatmap> {
        let maps = path.nodes().iter().map(|&id| self.module_map(id, img)).collect::<Result<Vec<_>>>()?;
        intra_path_fuse(&maps.iter().collect::<Vec<_>>())
    }
}

/// Path outputs from precomputed module maps (no module execution).
pub fn path_output_from(maps: &[(ModuleId, Heatmap)], path: &PathGraph) -> Result<Heatmap> {
    let picked = path
        .nodes()
        .iter()
        .map(|id| maps.iter().find(|(m, _)| m == id).map(|(_, h)| h).ok_or(Error::UnknownModuleId(*id)))
        .collect::<Result<Vec<_>>>()?;
    intra_path_fuse(&picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_for_fifty() {
        assert_eq!(attempt_budget(50), 600);
        assert_eq!(attempt_budget(5), 150);
    }

    #[test]
    fn single_module_pool() {
        let reg = Registry::with_active(&[ModuleKind::Ela]).unwrap();
        let paths = sample_paths(&reg, 5, 0).unwrap();
        assert_eq!(paths, vec![PathGraph::single(0)]);
    }

    #[test]
    fn sampling_is_deterministic_and_includes_baselines() {
        let reg = Registry::default_pool();
        let a = sample_paths(&reg, 50, 3).unwrap();
        assert_eq!(a, sample_paths(&reg, 50, 3).unwrap());
        for b in baseline_paths(&reg).unwrap() {
            assert!(a.contains(&b));
        }
        assert!(a.len() <= 50 + 8);
        let small = sample_paths(&reg, 5, 3).unwrap();
        assert_eq!(&small[..5], &a[..5]);
    }

    #[test]
    fn exhaustive_sampling_caps_at_ordered_count() {
        let reg = Registry::default_pool();
        let paths = sample_paths(&reg, 5000, 1).unwrap();
        let sampled = paths.iter().filter(|p| p.len() <= MAX_PATH_LEN).count();
        // 7 + 42 + 210 + 840 ordered chains exist
        assert!(sampled <= 1099);
        assert!(paths.len() <= 1100);
    }

    #[test]
    fn path_validation() {
        assert!(PathGraph::new(vec![]).is_err());
        assert!(PathGraph::new(vec![1, 2, 1]).is_err());
        assert!(PathGraph::new((0..9).collect()).is_err());
        let p = PathGraph::new(vec![0, 2]).unwrap();
        assert_eq!(p.key(), "ELA>NOI1");
        assert_eq!(PathGraph::parse("ELA>NOI1").unwrap(), p);
        assert_eq!(p.edges().collect::<Vec<_>>(), vec![(0, 2)]);
    }

    #[test]
    fn fuse_means() {
        let a = Heatmap::constant(2, 2, 0.2);
        let b = Heatmap::constant(2, 2, 0.6);
        let m = intra_path_fuse(&[&a, &b]).unwrap();
        assert!(m.values().iter().all(|v| (v - 0.4).abs() < 1e-6));
        assert_eq!(intra_path_fuse(&[&a]).unwrap(), a);
        let z = Heatmap::zeros(1, 1);
        let o = Heatmap::constant(1, 1, 1.0);
        let t = intra_path_fuse(&[&z, &z, &o]).unwrap();
        assert!((t.values()[0] - 1.0 / 3.0).abs() < 1e-6);
        assert!(matches!(intra_path_fuse(&[]), Err(Error::EmptyInput)));
        assert!(matches!(intra_path_fuse(&[&a, &z]), Err(Error::DimensionMismatch(_))));
    }
}
