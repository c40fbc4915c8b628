use frame_jpeg::{
    coding_mode, decode_rgb, encode_rgb, quant_tables, read_coefficients, CodingMode, JpegError,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise_image(w: u32, h: u32, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..w * h * 3).map(|_| rng.gen()).collect()
}

fn smooth_image(w: u32, h: u32) -> Vec<u8> {
    let mut v = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            v.push((x * 255 / w.max(1)) as u8);
            v.push((y * 255 / h.max(1)) as u8);
            v.push(((x + y) * 127 / (w + h)) as u8);
        }
    }
    v
}

#[test]
fn uniform_gray_has_no_ac_energy() {
    let rgb = vec![128u8; 32 * 24 * 3];
    let bytes = encode_rgb(&rgb, 32, 24, 50).unwrap();
    let coefs = read_coefficients(&bytes).unwrap();
    let luma = coefs.luma();
    assert_eq!((luma.blocks_wide, luma.blocks_high), (4, 3));
    let dc = luma.blocks[0][0];
    for block in &luma.blocks {
        assert_eq!(block[0], dc);
        assert!(block[1..].iter().all(|&c| c == 0));
    }
}

#[test]
fn quant_tables_read_back() {
    let rgb = smooth_image(40, 40);
    let bytes = encode_rgb(&rgb, 40, 40, 75).unwrap();
    let coefs = read_coefficients(&bytes).unwrap();
    let (luma, chroma) = quant_tables(75);
    assert_eq!(coefs.luma_quant_table, luma);
    assert_eq!(coefs.chroma_quant_table, chroma);
}

#[test]
fn luma_grid_covers_image() {
    let rgb = smooth_image(21, 35);
    let coefs = read_coefficients(&encode_rgb(&rgb, 21, 35, 80).unwrap()).unwrap();
    assert_eq!(coefs.luma().blocks_wide, 3);
    assert_eq!(coefs.luma().blocks_high, 5);
}

#[test]
fn round_trip_dimensions() {
    let rgb = noise_image(20, 20, 1);
    let (w, h, out) = decode_rgb(&encode_rgb(&rgb, 20, 20, 70).unwrap()).unwrap();
    assert_eq!((w, h), (20, 20));
    assert_eq!(out.len(), 20 * 20 * 3);
}

#[test]
fn quality_100_is_near_lossless_on_noise() {
    let rgb = noise_image(64, 48, 7);
    let (_, _, out) = decode_rgb(&encode_rgb(&rgb, 64, 48, 100).unwrap()).unwrap();
    let close = rgb
        .iter()
        .zip(out.iter())
        .filter(|(a, b)| (i32::from(**a) - i32::from(**b)).abs() <= 2)
        .count();
    assert!(close as f64 >= 0.99 * rgb.len() as f64, "{close} / {}", rgb.len());
}

#[test]
fn agrees_with_reference_decoder() {
    // An independent decoder must land within +-1 of our reconstruction.
    for (seed, q) in [(3u64, 90u8), (4, 60), (5, 100), (6, 30)] {
        let mut rgb = smooth_image(48, 40);
        let noise = noise_image(48, 40, seed);
        for (p, n) in rgb.iter_mut().zip(noise) {
            *p = p.saturating_add(n / 8);
        }
        let bytes = encode_rgb(&rgb, 48, 40, q).unwrap();
        let (_, _, ours) = decode_rgb(&bytes).unwrap();
        let reference = image::load_from_memory_with_format(&bytes, image::ImageFormat::Jpeg)
            .unwrap()
            .to_rgb8()
            .into_raw();
        let max_diff = ours
            .iter()
            .zip(reference.iter())
            .map(|(a, b)| (i32::from(*a) - i32::from(*b)).abs())
            .max()
            .unwrap();
        let within_one = ours
            .iter()
            .zip(reference.iter())
            .filter(|(a, b)| (i32::from(**a) - i32::from(**b)).abs() <= 1)
            .count();
        assert!(
            within_one as f64 >= 0.99 * ours.len() as f64,
            "q={q}: {within_one}/{} within 1, max diff {max_diff}",
            ours.len()
        );
    }
}

#[test]
fn coefficient_planes_reproduce_pixel_decode() {
    let rgb = noise_image(40, 24, 9);
    let bytes = encode_rgb(&rgb, 40, 24, 85).unwrap();
    let coefs = read_coefficients(&bytes).unwrap();
    let (_, _, pixels) = decode_rgb(&bytes).unwrap();
    let (y, cw, ch) = coefs.component_plane(0);
    let (cb, _, _) = coefs.component_plane(1);
    let (cr, _, _) = coefs.component_plane(2);
    assert_eq!((cw, ch), (40, 24));
    for i in 0..cw * ch {
        let (r, g, b) = frame_jpeg::ycbcr_to_rgb(y[i], cb[i], cr[i]);
        for (a, e) in [r, g, b].iter().zip(&pixels[i * 3..i * 3 + 3]) {
            assert!((i32::from(*a) - i32::from(*e)).abs() <= 1);
        }
    }
}

#[test]
fn progressive_is_refused() {
    let rgb = smooth_image(32, 32);
    let mut bytes = encode_rgb(&rgb, 32, 32, 75).unwrap();
    // flip the SOF0 marker to SOF2
    let pos = bytes.windows(2).position(|w| w == [0xff, 0xc0]).unwrap();
    bytes[pos + 1] = 0xc2;
    assert_eq!(coding_mode(&bytes).unwrap(), CodingMode::Progressive);
    assert_eq!(
        read_coefficients(&bytes).unwrap_err(),
        JpegError::Unsupported(CodingMode::Progressive)
    );
}

#[test]
fn garbage_is_malformed() {
    assert!(matches!(read_coefficients(b"not a jpeg"), Err(JpegError::Malformed(_))));
    let rgb = smooth_image(32, 32);
    let bytes = encode_rgb(&rgb, 32, 32, 75).unwrap();
    let truncated = &bytes[..bytes.len() / 2];
    assert!(matches!(read_coefficients(truncated), Err(JpegError::Malformed(_))));
}

#[test]
fn encoding_is_deterministic() {
    let rgb = noise_image(33, 17, 11);
    assert_eq!(encode_rgb(&rgb, 33, 17, 77).unwrap(), encode_rgb(&rgb, 33, 17, 77).unwrap());
}

#[test]
fn reencoding_at_same_quality_is_stable() {
    let rgb = smooth_image(64, 64);
    let once = decode_rgb(&encode_rgb(&rgb, 64, 64, 90).unwrap()).unwrap().2;
    let twice = decode_rgb(&encode_rgb(&once, 64, 64, 90).unwrap()).unwrap().2;
    let mean_abs: f64 = once
        .iter()
        .zip(twice.iter())
        .map(|(a, b)| f64::from((i32::from(*a) - i32::from(*b)).abs()))
        .sum::<f64>()
        / once.len() as f64;
    assert!(mean_abs < 0.5, "mean abs change {mean_abs}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn decode_preserves_dimensions(w in 1u32..40, h in 1u32..40, q in 1u8..=100, seed in any::<u64>()) {
        let rgb = noise_image(w, h, seed);
        let (dw, dh, out) = decode_rgb(&encode_rgb(&rgb, w, h, q).unwrap()).unwrap();
        prop_assert_eq!((dw, dh), (w, h));
        prop_assert_eq!(out.len(), rgb.len());
    }
}
