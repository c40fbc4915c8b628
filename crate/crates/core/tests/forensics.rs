use frame_core::forensics::{run_module, ModuleDescriptor, ModuleKind};
use frame_core::image_io::{decode_image, jpeg_reencode, ImageBuffer, SourceFormat};
use frame_core::mask::BinaryMask;
use frame_core::synth::{camera_image, make_splice, CameraProfile, Rect};
use frame_core::Heatmap;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn implemented() -> Vec<ModuleKind> {
    ModuleKind::ALL.iter().copied().filter(|k| k.is_implemented()).collect()
}

fn all_maps(bytes: &[u8]) -> Vec<Heatmap> {
    let img = decode_image(bytes).unwrap();
    implemented()
        .into_iter()
        .map(|k| run_module(&ModuleDescriptor::default_for(k), &img, Some(bytes)).unwrap())
        .collect()
}

#[test]
fn identical_across_runs_and_thread_counts() {
    let img = camera_image(11, 96, 80, CameraProfile { noise_sigma: 2.0, cfa: true });
    let bytes = jpeg_reencode(&img, 85).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| all_maps(&bytes));
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| all_maps(&bytes));
    assert_eq!(one, four);
    assert_eq!(one, all_maps(&bytes));
}

fn in_out(map: &Heatmap, mask: &BinaryMask) -> (f64, f64) {
    let (mut a, mut na, mut b, mut nb) = (0.0, 0.0, 0.0, 0.0);
    for (v, &m) in map.values().iter().zip(mask.data()) {
        if m {
            a += f64::from(*v);
            na += 1.0;
        } else {
            b += f64::from(*v);
            nb += 1.0;
        }
    }
    (a / na, b / nb)
}

#[test]
fn ghost_responds_inside_splices() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let desc = ModuleDescriptor::default_for(ModuleKind::Ghost);
    let mut wins = 0;
    for s in 0..20u64 {
        let (w, h) = (rng.gen_range(32..72), rng.gen_range(32..72));
        let (x, y) = (rng.gen_range(16..=144 - w), rng.gen_range(16..=144 - h));
        let item = make_splice(500 + s, 900 + s, 90, 60, Rect::new(x, y, w, h), (160, 160)).unwrap();
        let map = run_module(&desc, &item.image().unwrap(), Some(&item.bytes)).unwrap();
        let (i, o) = in_out(&map, &item.mask);
        wins += usize::from(i > o);
    }
    assert!(wins >= 18, "GHOST won {wins}/20");
}

#[test]
fn coefficient_modules_need_jpeg_bytes() {
    let img = camera_image(3, 64, 64, CameraProfile { noise_sigma: 2.0, cfa: true }).with_format(SourceFormat::Png);
    for k in implemented().into_iter().filter(|k| k.requires_jpeg_coefficients()) {
        assert!(run_module(&ModuleDescriptor::default_for(k), &img, None).is_err(), "{k}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn heatmaps_stay_in_unit_range(seed in any::<u64>(), w in 32u32..80, h in 32u32..80, q in 50u8..96) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<u8> = (0..w * h * 3).map(|_| rng.gen()).collect();
        let img = ImageBuffer::new(w, h, data, SourceFormat::Png).unwrap();
        let bytes = jpeg_reencode(&img, q).unwrap();
        for map in all_maps(&bytes) {
            prop_assert_eq!(map.dims(), (w as usize, h as usize));
            prop_assert!(map.values().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
        }
    }
}
