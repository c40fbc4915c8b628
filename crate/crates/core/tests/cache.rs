use std::fs;

use frame_core::cache::{
    content_digest, load_checkpoint, save_checkpoint, CacheKey, Checkpoint, HeatmapCache, Tensor,
};
use frame_core::forensics::{ModuleKind, Registry};
use frame_core::image_io::jpeg_reencode;
use frame_core::supernet::{AnalysisImage, Executor};
use frame_core::synth::{camera_image, CameraProfile};
use frame_core::{Error, Heatmap};

fn key(d: &str) -> CacheKey {
    CacheKey { image_digest: content_digest(d.as_bytes()), module_id: 3, param_digest: "p".into() }
}

#[test]
fn put_get_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let cache = HeatmapCache::new(dir.path());
    assert!(cache.get(&key("a")).is_none());
    let map = Heatmap::new(3, 2, vec![0.0, 1.0, 0.123_456_79, 0.5, 1e-7, 0.999_999]).unwrap();
    cache.put(&key("a"), &map).unwrap();
    cache.put(&key("a"), &map).unwrap();
    let back = cache.get(&key("a")).unwrap();
    assert!(back.values().iter().zip(map.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    let bytes = fs::read(cache.entry_path(&key("a"))).unwrap();
    assert_eq!(&bytes[..4], b"FRHM");
    assert_eq!(bytes.len(), 4 + 2 + 4 + 4 + 6 * 4 + 8);
}

#[test]
fn truncated_entry_is_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let cache = HeatmapCache::new(dir.path());
    let img = camera_image(2, 64, 64, CameraProfile { noise_sigma: 2.0, cfa: true });
    let bytes = jpeg_reencode(&img, 85).unwrap();
    let image = AnalysisImage::from_bytes(bytes.clone()).unwrap();
    let reg = Registry::default_pool();
    let id = ModuleKind::Noi1.id();
    let first = Executor::new(&reg, Some(&cache)).module_map(id, &image).unwrap();
    let desc = reg.descriptor(id).unwrap();
    let k = CacheKey { image_digest: image.digest.clone(), module_id: id, param_digest: desc.param_digest.clone() };
    let path = cache.entry_path(&k);
    let raw = fs::read(&path).unwrap();
    fs::write(&path, &raw[..raw.len() / 2]).unwrap();
    assert!(matches!(cache.try_get(&k), Err(Error::CorruptEntry { .. })));
    assert!(cache.get(&k).is_none());
    let exec = Executor::new(&reg, Some(&cache));
    assert_eq!(exec.module_map(id, &image).unwrap(), first);
    assert_eq!(exec.executions(), 1);
    assert!(cache.try_get(&k).unwrap().is_some());
}

#[test]
fn keys_follow_content_not_file_names() {
    let img = camera_image(4, 64, 64, CameraProfile { noise_sigma: 2.0, cfa: true });
    let bytes = jpeg_reencode(&img, 85).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("one.jpg"), dir.path().join("renamed.jpg"));
    fs::write(&a, &bytes).unwrap();
    fs::rename(&a, &b).unwrap();
    let reloaded = AnalysisImage::from_bytes(fs::read(&b).unwrap()).unwrap();
    assert_eq!(reloaded.digest, AnalysisImage::from_bytes(bytes).unwrap().digest);
}

#[test]
fn checkpoints_round_trip_and_check_versions() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("m.frck");
    let ck = Checkpoint {
        tensors: vec![Tensor::new("a", vec![2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5]), Tensor::new("b", vec![1], vec![7.0])],
        metadata: serde_json::json!({"seed": 0, "epochs": 15, "final_val_loss": 0.01}),
    };
    save_checkpoint(&file, &ck).unwrap();
    let back = load_checkpoint(&file).unwrap();
    assert_eq!(back.metadata, ck.metadata);
    for (x, y) in back.tensors.iter().zip(&ck.tensors) {
        assert_eq!(x.name, y.name);
        assert_eq!(x.shape, y.shape);
        assert!(x.values.iter().zip(&y.values).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    let mut raw = fs::read(&file).unwrap();
    assert_eq!(&raw[..4], b"FRCK");
    raw[4] = raw[4].wrapping_add(1);
    fs::write(&file, &raw).unwrap();
    assert!(matches!(load_checkpoint(&file), Err(Error::VersionMismatch { .. })));
}

#[test]
fn cache_digest_ignores_write_order() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (c1, c2) = (HeatmapCache::new(d1.path()), HeatmapCache::new(d2.path()));
    let m = Heatmap::constant(4, 4, 0.25);
    for k in ["x", "y", "z"] {
        c1.put(&key(k), &m).unwrap();
    }
    for k in ["z", "x", "y"] {
        c2.put(&key(k), &m).unwrap();
    }
    assert_eq!(c1.digest().unwrap(), c2.digest().unwrap());
}
