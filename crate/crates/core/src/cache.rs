//! On-disk heatmap cache and model checkpoints.
//!
//! Heatmap entry (little-endian): `"FRHM"`, u16 version, u32 width,
//! u32 height, width*height f32 values, then the first 8 bytes of the
//! SHA-256 of everything before them.
//!
//! Checkpoint: `"FRCK"`, u16 version, u32 manifest length, the JSON manifest,
//! then each tensor's f64 values in manifest order.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forensics::ModuleId;
use crate::heatmap::Heatmap;

pub const HEATMAP_MAGIC: &[u8; 4] = b"FRHM";
pub const HEATMAP_VERSION: u16 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FRCK";
pub const CHECKPOINT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;
const CHECKSUM_LEN: usize = 8;

/// Hex SHA-256 of a byte string (image content addressing).
pub fn content_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub image_digest: String,
    pub module_id: ModuleId,
    pub param_digest: String,
}

impl CacheKey {
    pub fn file_name(&self) -> String {
        format!("{}-{}-{}.frhm", self.image_digest, self.module_id, self.param_digest)
    }
}

fn checksum(bytes: &[u8]) -> [u8; CHECKSUM_LEN] {
    let d = Sha256::digest(bytes);
    let mut out = [0; CHECKSUM_LEN];
    out.copy_from_slice(&d[..CHECKSUM_LEN]);
    out
}

pub fn encode_heatmap(map: &Heatmap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + map.values().len() * 4 + CHECKSUM_LEN);
    out.extend_from_slice(HEATMAP_MAGIC);
    out.extend_from_slice(&HEATMAP_VERSION.to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    for v in map.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum);
    out
}

pub fn decode_heatmap(bytes: &[u8], path: &Path) -> Result<Heatmap> {
    let corrupt = |reason: &str| Error::CorruptEntry { path: path.to_path_buf(), reason: reason.to_string() };
    if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
        return Err(corrupt("truncated header"));
    }
    if &bytes[..4] != HEATMAP_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != HEATMAP_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: HEATMAP_VERSION });
    }
    let w = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let h = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN + CHECKSUM_LEN));
    if expected != Some(bytes.len()) {
        return Err(corrupt("length does not match dimensions"));
    }
    let body = &bytes[..bytes.len() - CHECKSUM_LEN];
    if checksum(body) != bytes[body.len()..] {
        return Err(corrupt("checksum mismatch"));
    }
    let values = body[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Heatmap::new(w, h, values).map_err(|_| corrupt("values outside [0, 1]"))
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes through a uniquely named temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = dir.join(format!(
        ".{}.{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("entry"),
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Content-addressed heatmap store, one file per entry under a two-level
/// fan-out of the image digest.
#[derive(Clone, Debug)]
pub struct HeatmapCache {
    root: PathBuf,
}

impl HeatmapCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_path(&self, key: &CacheKey) -> PathBuf {
        let d = &key.image_digest;
        let (a, b) = (&d[..2.min(d.len())], &d[2.min(d.len())..4.min(d.len())]);
        self.root.join(a).join(b).join(key.file_name())
    }

    pub fn put(&self, key: &CacheKey, map: &Heatmap) -> Result<()> {
        write_atomic(&self.entry_path(key), &encode_heatmap(map))
    }

    /// Missing entries are `Ok(None)`; damaged ones are errors.
    pub fn try_get(&self, key: &CacheKey) -> Result<Option<Heatmap>> {
        let path = self.entry_path(key);
        match fs::read(&path) {
            Ok(bytes) => decode_heatmap(&bytes, &path).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    /// Like [`try_get`](Self::try_get), but a damaged entry is logged and
    /// reported as absent so the caller recomputes it.
    pub fn get(&self, key: &CacheKey) -> Option<Heatmap> {
        match self.try_get(key) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("ignoring cache entry: {e}");
                None
            }
        }
    }

    /// SHA-256 over every entry's relative path and contents, in sorted order.
    pub fn digest(&self) -> Result<String> {
        let mut files = Vec::new();
        collect_files(&self.root, &mut files)?;
        files.sort();
        let mut h = Sha256::new();
        for f in files {
            let rel = f.strip_prefix(&self.root).unwrap_or(&f);
            h.update(rel.to_string_lossy().as_bytes());
            h.update(fs::read(&f).map_err(|e| Error::io(&f, e))?);
        }
        Ok(hex::encode(h.finalize()))
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let rd = match fs::read_dir(dir) {
        Ok(rd) => rd,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(dir, e)),
    };
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "frhm") {
            out.push(p);
        }
    }
    Ok(())
}

/// A named tensor: row-major f64 values with their shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self { name: name.into(), shape, values }
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointManifest {
    tensors: Vec<TensorEntry>,
    metadata: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<Tensor>,
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = CheckpointManifest {
            tensors: self.tensors.iter().map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() }).collect(),
            metadata: self.metadata.clone(),
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |reason: &str| Error::CorruptEntry { path: path.to_path_buf(), reason: reason.to_string() };
        if bytes.len() < 10 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        let len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
        let json = bytes.get(10..10 + len).ok_or_else(|| corrupt("truncated manifest"))?;
        let manifest: CheckpointManifest =
            serde_json::from_slice(json).map_err(|e| corrupt(&format!("manifest: {e}")))?;
        let mut payload = &bytes[10 + len..];
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for entry in manifest.tensors {
            let n: usize = entry.shape.iter().product();
            if payload.len() < n * 8 {
                return Err(corrupt("truncated tensor payload"));
            }
            let values = payload[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            payload = &payload[n * 8..];
            tensors.push(Tensor { name: entry.name, shape: entry.shape, values });
        }
        if !payload.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Self { tensors, metadata: manifest.metadata })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &ckpt.to_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> CacheKey {
        CacheKey { image_digest: "abcdef0123".into(), module_id: 3, param_digest: "00ff".into() }
    }

    #[test]
    fn heatmap_round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cache = HeatmapCache::new(dir.path());
        assert!(cache.get(&key()).is_none());
        let map = Heatmap::new(3, 2, vec![0.0, 0.1, 0.25, 0.5, 0.75, 1.0]).unwrap();
        cache.put(&key(), &map).unwrap();
        assert_eq!(cache.get(&key()).unwrap(), map);
        let path = cache.entry_path(&key());
        assert!(path.starts_with(dir.path().join("ab").join("cd")));
        let raw = fs::read(&path).unwrap();
        assert_eq!(raw.len(), 14 + 6 * 4 + 8);
        assert_eq!(&raw[..4], b"FRHM");
        assert_eq!(u32::from_le_bytes(raw[6..10].try_into().unwrap()), 3);
        assert_eq!(f32::from_le_bytes(raw[14 + 4..14 + 8].try_into().unwrap()), 0.1);
    }

    #[test]
    fn damaged_entries_read_as_absent() {
        let dir = tempfile::tempdir().unwrap();
        let cache = HeatmapCache::new(dir.path());
        cache.put(&key(), &Heatmap::constant(4, 4, 0.5)).unwrap();
        let path = cache.entry_path(&key());
        let raw = fs::read(&path).unwrap();
        fs::write(&path, &raw[..raw.len() - 3]).unwrap();
        assert!(matches!(cache.try_get(&key()), Err(Error::CorruptEntry { .. })));
        assert!(cache.get(&key()).is_none());
        let mut flipped = raw.clone();
        flipped[20] ^= 1;
        fs::write(&path, &flipped).unwrap();
        assert!(matches!(cache.try_get(&key()), Err(Error::CorruptEntry { .. })));
    }

    #[test]
    fn checkpoint_round_trip_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.frck");
        let ck = Checkpoint {
            tensors: vec![
                Tensor::new("a", vec![2, 2], vec![1.0, -2.5, f64::MIN_POSITIVE, 1e300]),
                Tensor::new("b", vec![1], vec![0.1]),
            ],
            metadata: serde_json::json!({"seed": 0, "epochs": 15, "val_loss": 0.01}),
        };
        save_checkpoint(&path, &ck).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ck);
        let mut raw = fs::read(&path).unwrap();
        raw[4] = 9;
        fs::write(&path, &raw).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::VersionMismatch { found: 9, .. })));
    }
}
