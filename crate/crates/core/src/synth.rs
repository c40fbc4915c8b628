//! Synthetic tamper corpus.
//!
//! Host images imitate a camera pipeline: a procedural scene, Gaussian sensor
//! noise, an RGGB Bayer mosaic and bilinear demosaicing. Forgeries then plant
//! the traces the module pool looks for: a compression-history mismatch
//! (splicing), a shifted JPEG grid (copy-move), missing demosaicing traces
//! (removal) and a foreign noise level (other).

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::ManipType;
use crate::image_io::{decode_image, encode_png_rgb, jpeg_reencode, ImageBuffer, SourceFormat};
use crate::mask::BinaryMask;

/// Clearance every forged rectangle keeps from the image border.
pub const MARGIN: u32 = 16;
/// Smallest forged area in pixels.
pub const MIN_RECT_AREA: u32 = 32 * 32;
/// Side lengths the corpus builder draws from.
pub const SIDES: [u32; 3] = [128, 160, 192];
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u32 {
        self.w * self.h
    }

    pub fn intersects(&self, o: &Rect) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }

    /// Checks size and border clearance inside a `width` x `height` image.
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        if self.area() < MIN_RECT_AREA || self.w == 0 || self.h == 0 {
            return Err(Error::RectOutOfBounds(format!("{self:?} is smaller than {MIN_RECT_AREA} pixels")));
        }
        let fits = self.x >= MARGIN
            && self.y >= MARGIN
            && self.x + self.w + MARGIN <= width
            && self.y + self.h + MARGIN <= height;
        if !fits {
            return Err(Error::RectOutOfBounds(format!(
                "{self:?} leaves less than {MARGIN} px of border in a {width}x{height} image"
            )));
        }
        Ok(())
    }

    pub fn mask(&self, width: u32, height: u32) -> BinaryMask {
        let mut m = BinaryMask::empty(width as usize, height as usize);
        for y in self.y..self.y + self.h {
            for x in self.x..self.x + self.w {
                m.set(x as usize, y as usize, true);
            }
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Authentic,
    Tampered,
}

/// How an item was made.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub donor_seed: Option<u64>,
    /// Qualities of successive JPEG saves, oldest first.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub qualities: Vec<u8>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub rects: Vec<Rect>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusItem {
    pub bytes: Vec<u8>,
    pub format: SourceFormat,
    pub width: u32,
    pub height: u32,
    pub mask: BinaryMask,
    pub label: Label,
    pub manip_type: ManipType,
    pub provenance: Provenance,
}

impl CorpusItem {
    pub fn image(&self) -> Result<ImageBuffer> {
        decode_image(&self.bytes)
    }
}

/// Tuning of the simulated camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraProfile {
    pub noise_sigma: f64,
    /// Mosaic and demosaic; without it every channel is sampled everywhere.
    pub cfa: bool,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Multi-octave value noise in roughly `[-1, 1]`.
fn value_noise(rng: &mut ChaCha8Rng, w: usize, h: usize, octaves: &[(f64, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for &(scale, amp) in octaves {
        let gw = (w as f64 / scale).ceil() as usize + 2;
        let gh = (h as f64 / scale).ceil() as usize + 2;
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        for y in 0..h {
            let fy = y as f64 / scale;
            let (y0, ty) = (fy.floor() as usize, smooth(fy.fract()));
            for x in 0..w {
                let fx = x as f64 / scale;
                let (x0, tx) = (fx.floor() as usize, smooth(fx.fract()));
                let l = |i: usize, j: usize| lattice[j * gw + i];
                let top = l(x0, y0) * (1.0 - tx) + l(x0 + 1, y0) * tx;
                let bot = l(x0, y0 + 1) * (1.0 - tx) + l(x0 + 1, y0 + 1) * tx;
                out[y * w + x] += amp * (top * (1.0 - ty) + bot * ty);
            }
        }
    }
    out
}

/// Noise-free scene: textured luminance with shapes and a gradient, tinted by
/// slowly varying chroma. Values stay clear of the 8-bit limits.
fn scene(rng: &mut ChaCha8Rng, w: usize, h: usize) -> [Vec<f64>; 3] {
    let base = rng.gen_range(90.0..160.0);
    let lum_noise = value_noise(rng, w, h, &[(48.0, 45.0), (24.0, 25.0), (12.0, 14.0), (6.0, 8.0), (3.0, 5.0)]);
    let (gx, gy) = (rng.gen_range(-0.25..0.25), rng.gen_range(-0.25..0.25));
    let mut lum: Vec<f64> = (0..w * h)
        .map(|i| base + lum_noise[i] + gx * (i % w) as f64 + gy * (i / w) as f64)
        .collect();
    for _ in 0..rng.gen_range(2..5) {
        let cx = rng.gen_range(0.0..w as f64);
        let cy = rng.gen_range(0.0..h as f64);
        let r = rng.gen_range(8.0..(w.min(h) as f64 / 3.0));
        let delta = rng.gen_range(-45.0..45.0);
        let disc = rng.gen_bool(0.5);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let d = if disc { (dx * dx + dy * dy).sqrt() - r } else { dx.abs().max(dy.abs()) - r };
                // one-pixel soft edge
                let cover = (0.5 - d).clamp(0.0, 1.0);
                lum[y * w + x] += delta * cover;
            }
        }
    }
    let tint = [rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)];
    let chroma_r = value_noise(rng, w, h, &[(64.0, 18.0), (16.0, 6.0)]);
    let chroma_b = value_noise(rng, w, h, &[(64.0, 18.0), (16.0, 6.0)]);
    let clip = |v: f64| v.clamp(14.0, 241.0);
    let r = (0..w * h).map(|i| clip(lum[i] + tint[0] + chroma_r[i])).collect();
    let g = (0..w * h).map(|i| clip(lum[i])).collect();
    let b = (0..w * h).map(|i| clip(lum[i] + tint[1] + chroma_b[i])).collect();
    [r, g, b]
}

/// Channel sampled at `(x, y)` by an RGGB mosaic.
fn bayer_channel(x: usize, y: usize) -> usize {
    match (y % 2, x % 2) {
        (0, 0) => 0,
        (1, 1) => 2,
        _ => 1,
    }
}

/// Bilinear demosaicing of an RGGB mosaic with mirrored borders.
fn demosaic(mosaic: &[f64], w: usize, h: usize) -> [Vec<f64>; 3] {
    let m = |x: isize, y: isize| {
        let mx = if x < 0 { -x } else if x >= w as isize { 2 * (w as isize - 1) - x } else { x };
        let my = if y < 0 { -y } else if y >= h as isize { 2 * (h as isize - 1) - y } else { y };
        mosaic[my as usize * w + mx as usize]
    };
    let mut out = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let here = m(xi, yi);
            let cross = 0.25 * (m(xi - 1, yi) + m(xi + 1, yi) + m(xi, yi - 1) + m(xi, yi + 1));
            let diag = 0.25 * (m(xi - 1, yi - 1) + m(xi + 1, yi - 1) + m(xi - 1, yi + 1) + m(xi + 1, yi + 1));
            let horiz = 0.5 * (m(xi - 1, yi) + m(xi + 1, yi));
            let vert = 0.5 * (m(xi, yi - 1) + m(xi, yi + 1));
            let i = y * w + x;
            let (r, g, b) = match bayer_channel(x, y) {
                0 => (here, cross, diag),
                2 => (diag, cross, here),
                // green on a red row: red left/right, blue above/below
                _ if y % 2 == 0 => (horiz, here, vert),
                _ => (vert, here, horiz),
            };
            out[0][i] = r;
            out[1][i] = g;
            out[2][i] = b;
        }
    }
    out
}

fn to_image(planes: &[Vec<f64>; 3], w: usize, h: usize) -> ImageBuffer {
    let data = (0..w * h)
        .flat_map(|i| planes.iter().map(move |p| p[i].round().clamp(0.0, 255.0) as u8))
        .collect();
    ImageBuffer::new(w as u32, h as u32, data, SourceFormat::Other).expect("synthetic dimensions are valid")
}

/// A synthetic camera capture.
pub fn camera_image(seed: u64, width: u32, height: u32, profile: CameraProfile) -> ImageBuffer {
    let (w, h) = (width as usize, height as usize);
    let mut rng = rng_for(seed, 1);
    let clean = scene(&mut rng, w, h);
    let noise = Normal::new(0.0, profile.noise_sigma.max(1e-9)).expect("finite sigma");
    if profile.cfa {
        let mosaic: Vec<f64> = (0..w * h)
            .map(|i| clean[bayer_channel(i % w, i / w)][i] + noise.sample(&mut rng))
            .collect();
        to_image(&demosaic(&mosaic, w, h), w, h)
    } else {
        let noisy = clean.map(|p| p.iter().map(|v| v + noise.sample(&mut rng)).collect());
        to_image(&noisy, w, h)
    }
}

fn default_profile(seed: u64) -> CameraProfile {
    let mut rng = rng_for(seed, 2);
    CameraProfile { noise_sigma: rng.gen_range(1.5..3.0), cfa: true }
}

fn jpeg_cycle(img: &ImageBuffer, quality: u8) -> Result<(Vec<u8>, ImageBuffer)> {
    let bytes = jpeg_reencode(img, quality)?;
    let decoded = decode_image(&bytes)?;
    Ok((bytes, decoded))
}

fn paste(dst: &mut [u8], src: &[u8], width: u32, from: Rect, to_x: u32, to_y: u32) {
    let w = width as usize;
    for dy in 0..from.h as usize {
        for dx in 0..from.w as usize {
            let s = ((from.y as usize + dy) * w + from.x as usize + dx) * 3;
            let d = ((to_y as usize + dy) * w + to_x as usize + dx) * 3;
            dst[d..d + 3].copy_from_slice(&src[s..s + 3]);
        }
    }
}

fn check_qualities(qs: &[u8]) -> Result<()> {
    match qs.iter().find(|q| !(1..=100).contains(*q)) {
        Some(q) => Err(Error::InvalidArgument(format!("JPEG quality {q} outside 1..=100"))),
        None => Ok(()),
    }
}

fn tampered(bytes: Vec<u8>, format: SourceFormat, w: u32, h: u32, mask: BinaryMask, manip: ManipType, prov: Provenance) -> CorpusItem {
    CorpusItem { bytes, format, width: w, height: h, mask, label: Label::Tampered, manip_type: manip, provenance: prov }
}

/// Splice: a donor capture compressed at `q_donor` is pasted into a host
/// compressed at `q_host`, and the composite is saved again at `q_host`.
/// The donor patch keeps its position, so its old block grid stays aligned.
pub fn make_splice(
    host_seed: u64,
    donor_seed: u64,
    q_host: u8,
    q_donor: u8,
    rect: Rect,
    (width, height): (u32, u32),
) -> Result<CorpusItem> {
    check_qualities(&[q_host, q_donor])?;
    if q_host == q_donor {
        return Err(Error::InvalidArgument("host and donor qualities must differ".into()));
    }
    rect.validate(width, height)?;
    let (_, host) = jpeg_cycle(&camera_image(host_seed, width, height, default_profile(host_seed)), q_host)?;
    let (_, donor) = jpeg_cycle(&camera_image(donor_seed, width, height, default_profile(donor_seed)), q_donor)?;
    let mut data = host.into_data();
    paste(&mut data, donor.data(), width, rect, rect.x, rect.y);
    let composite = ImageBuffer::new(width, height, data, SourceFormat::Other)?;
    let bytes = jpeg_reencode(&composite, q_host)?;
    let prov = Provenance { seed: host_seed, donor_seed: Some(donor_seed), qualities: vec![q_host, q_donor, q_host], rects: vec![rect] };
    Ok(tampered(bytes, SourceFormat::Jpeg, width, height, rect.mask(width, height), ManipType::Splicing, prov))
}

/// Copy-move: `src` is cloned to `src + offset` inside one capture that was
/// saved at `q_first`; the result is saved at `q_second`. Only the
/// destination is marked.
pub fn make_copy_move(
    seed: u64,
    src: Rect,
    offset: (i32, i32),
    q_first: u8,
    q_second: u8,
    (width, height): (u32, u32),
) -> Result<CorpusItem> {
    check_qualities(&[q_first, q_second])?;
    src.validate(width, height)?;
    let dx = i64::from(src.x) + i64::from(offset.0);
    let dy = i64::from(src.y) + i64::from(offset.1);
    if dx < 0 || dy < 0 {
        return Err(Error::RectOutOfBounds(format!("destination origin ({dx}, {dy})")));
    }
    let dst = Rect::new(dx as u32, dy as u32, src.w, src.h);
    if dst.intersects(&src) {
        return Err(Error::RectOverlap);
    }
    dst.validate(width, height)?;
    let (_, host) = jpeg_cycle(&camera_image(seed, width, height, default_profile(seed)), q_first)?;
    let mut data = host.data().to_vec();
    paste(&mut data, host.data(), width, src, dst.x, dst.y);
    let forged = ImageBuffer::new(width, height, data, SourceFormat::Other)?;
    let bytes = jpeg_reencode(&forged, q_second)?;
    let prov = Provenance { seed, donor_seed: None, qualities: vec![q_first, q_second], rects: vec![src, dst] };
    Ok(tampered(bytes, SourceFormat::Jpeg, width, height, dst.mask(width, height), ManipType::CopyMove, prov))
}

/// Object removal: `rect` is filled by blending its border pixels inwards and
/// adding channel-independent noise, as an inpainting tool would; the fill
/// carries no demosaicing structure. Saved as PNG.
pub fn make_removal(seed: u64, rect: Rect, (width, height): (u32, u32)) -> Result<CorpusItem> {
    rect.validate(width, height)?;
    let profile = default_profile(seed);
    let host = camera_image(seed, width, height, profile);
    let mut rng = rng_for(seed, 3);
    let noise = Normal::new(0.0, profile.noise_sigma).expect("finite sigma");
    let w = width as usize;
    let px = |x: u32, y: u32, c: usize| f64::from(host.data()[(y as usize * w + x as usize) * 3 + c]);
    let mut data = host.data().to_vec();
    let (x0, y0, x1, y1) = (rect.x - 1, rect.y - 1, rect.x + rect.w, rect.y + rect.h);
    for y in rect.y..rect.y + rect.h {
        for x in rect.x..rect.x + rect.w {
            let u = f64::from(x - x0) / f64::from(x1 - x0);
            let v = f64::from(y - y0) / f64::from(y1 - y0);
            for c in 0..3 {
                let horiz = (1.0 - u) * px(x0, y, c) + u * px(x1, y, c);
                let vert = (1.0 - v) * px(x, y0, c) + v * px(x, y1, c);
                let val = 0.5 * (horiz + vert) + noise.sample(&mut rng);
                data[(y as usize * w + x as usize) * 3 + c] = val.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    let img = ImageBuffer::new(width, height, data, SourceFormat::Other)?;
    let bytes = encode_png_rgb(&img)?;
    let prov = Provenance { seed, donor_seed: None, qualities: vec![], rects: vec![rect] };
    Ok(tampered(bytes, SourceFormat::Png, width, height, rect.mask(width, height), ManipType::Removal, prov))
}

/// Noise splice: a patch from a noisier camera without a colour filter array
/// is pasted into a capture. Saved as PNG.
pub fn make_noise_splice(host_seed: u64, donor_seed: u64, rect: Rect, (width, height): (u32, u32)) -> Result<CorpusItem> {
    rect.validate(width, height)?;
    let host = camera_image(host_seed, width, height, default_profile(host_seed));
    let mut rng = rng_for(donor_seed, 4);
    let donor_profile = CameraProfile { noise_sigma: rng.gen_range(6.0..9.0), cfa: false };
    let donor = camera_image(donor_seed, width, height, donor_profile);
    let mut data = host.into_data();
    paste(&mut data, donor.data(), width, rect, rect.x, rect.y);
    let img = ImageBuffer::new(width, height, data, SourceFormat::Other)?;
    let bytes = encode_png_rgb(&img)?;
    let prov = Provenance { seed: host_seed, donor_seed: Some(donor_seed), qualities: vec![], rects: vec![rect] };
    Ok(tampered(bytes, SourceFormat::Png, width, height, rect.mask(width, height), ManipType::Other, prov))
}

/// An untouched capture, as JPEG at `quality` or as PNG when `None`.
pub fn make_authentic(seed: u64, quality: Option<u8>, (width, height): (u32, u32)) -> Result<CorpusItem> {
    let img = camera_image(seed, width, height, default_profile(seed));
    let (bytes, format, qualities) = match quality {
        Some(q) => (jpeg_reencode(&img, q)?, SourceFormat::Jpeg, vec![q]),
        None => (encode_png_rgb(&img)?, SourceFormat::Png, vec![]),
    };
    Ok(CorpusItem {
        bytes,
        format,
        width,
        height,
        mask: BinaryMask::empty(width as usize, height as usize),
        label: Label::Authentic,
        manip_type: ManipType::Unknown,
        provenance: Provenance { seed, donor_seed: None, qualities, rects: vec![] },
    })
}

/// A rectangle with sides in `[32, max_side]` and the required border clearance.
fn random_rect(rng: &mut ChaCha8Rng, width: u32, height: u32, max_side: u32) -> Rect {
    let w = rng.gen_range(32..=max_side.min(width - 2 * MARGIN));
    let h = rng.gen_range(32..=max_side.min(height - 2 * MARGIN));
    let x = rng.gen_range(MARGIN..=width - MARGIN - w);
    let y = rng.gen_range(MARGIN..=height - MARGIN - h);
    Rect::new(x, y, w, h)
}

/// Draws a copy-move source and an offset whose destination is disjoint,
/// in bounds and off the 8-pixel grid.
fn copy_move_layout(rng: &mut ChaCha8Rng, width: u32, height: u32) -> (Rect, (i32, i32)) {
    loop {
        let src = random_rect(rng, width, height, 48);
        let dst = random_rect(rng, width, height, 48);
        let dst = Rect::new(dst.x.min(width - MARGIN - src.w), dst.y.min(height - MARGIN - src.h), src.w, src.h);
        let off = (dst.x as i32 - src.x as i32, dst.y as i32 - src.y as i32);
        let misaligned = off.0.rem_euclid(8) != 0 || off.1.rem_euclid(8) != 0;
        if !dst.intersects(&src) && misaligned && dst.validate(width, height).is_ok() {
            return (src, off);
        }
    }
}

/// Generates item `index` of a corpus with `n_tampered` forgeries first.
pub fn corpus_item(seed: u64, index: usize, n_tampered: usize) -> Result<CorpusItem> {
    let mut rng = rng_for(seed, 1000 + index as u64);
    let size = (*SIDES.choose(&mut rng).expect("sides"), *SIDES.choose(&mut rng).expect("sides"));
    let item_seed: u64 = rng.gen();
    let other_seed: u64 = rng.gen();
    if index >= n_tampered {
        let quality = rng.gen_bool(0.5).then(|| rng.gen_range(70..=95));
        return make_authentic(item_seed, quality, size);
    }
    match index % 4 {
        0 => {
            let q_host = rng.gen_range(80..=95);
            let q_donor = rng.gen_range(50..=75);
            let rect = random_rect(&mut rng, size.0, size.1, 80);
            make_splice(item_seed, other_seed, q_host, q_donor, rect, size)
        }
        1 => {
            let (src, off) = copy_move_layout(&mut rng, size.0, size.1);
            let q_first = rng.gen_range(55..=75);
            let q_second = rng.gen_range(88..=95);
            make_copy_move(item_seed, src, off, q_first, q_second, size)
        }
        2 => {
            let rect = random_rect(&mut rng, size.0, size.1, 72);
            make_removal(item_seed, rect, size)
        }
        _ => {
            let rect = random_rect(&mut rng, size.0, size.1, 80);
            make_noise_splice(item_seed, other_seed, rect, size)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: String,
    pub mask: String,
    pub format: SourceFormat,
    pub width: u32,
    pub height: u32,
    pub label: Label,
    pub manip_type: ManipType,
    pub split: Split,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub n_tampered: usize,
    pub n_authentic: usize,
    pub items: Vec<ManifestEntry>,
}

impl Manifest {
    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("manifest serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.items.iter().filter(move |e| e.split == split)
    }
}

/// Seeded 80/20 train/validation assignment.
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, 7));
    let n_train = n * 4 / 5;
    let mut splits = vec![Split::Val; n];
    for &i in &order[..n_train] {
        splits[i] = Split::Train;
    }
    splits
}

/// Writes `images/`, `masks/` and the manifest under `out`.
pub fn build_corpus(n_tampered: usize, n_authentic: usize, seed: u64, out: &Path) -> Result<Manifest> {
    if n_tampered == 0 || n_authentic == 0 {
        return Err(Error::InvalidArgument("corpus needs at least one tampered and one authentic item".into()));
    }
    let n = n_tampered + n_authentic;
    let items: Vec<CorpusItem> = (0..n)
        .into_par_iter()
        .map(|i| corpus_item(seed, i, n_tampered))
        .collect::<Result<_>>()?;
    let splits = assign_splits(n, seed);
    for dir in ["images", "masks"] {
        let p = out.join(dir);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut entries = Vec::with_capacity(n);
    for (i, (item, split)) in items.iter().zip(splits).enumerate() {
        let id = format!("{i:04}");
        let ext = if item.format == SourceFormat::Jpeg { "jpg" } else { "png" };
        let image = format!("images/{id}.{ext}");
        let mask = format!("masks/{id}.png");
        write_file(&out.join(&image), &item.bytes)?;
        write_file(&out.join(&mask), &item.mask.to_png()?)?;
        entries.push(ManifestEntry {
            id,
            image,
            mask,
            format: item.format,
            width: item.width,
            height: item.height,
            label: item.label,
            manip_type: item.manip_type,
            split,
            provenance: item.provenance.clone(),
        });
    }
    let manifest = Manifest { version: MANIFEST_VERSION, seed, n_tampered, n_authentic, items: entries };
    write_file(&out.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// A corpus on disk.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Corpus {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_slice(&raw)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::VersionMismatch { found: manifest.version as u16, expected: MANIFEST_VERSION as u16 });
        }
        if manifest.items.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self { root: root.to_path_buf(), manifest })
    }

    pub fn image_bytes(&self, e: &ManifestEntry) -> Result<Vec<u8>> {
        let p = self.root.join(&e.image);
        fs::read(&p).map_err(|err| Error::io(&p, err))
    }

    pub fn mask(&self, e: &ManifestEntry) -> Result<BinaryMask> {
        let p = self.root.join(&e.mask);
        let bytes = fs::read(&p).map_err(|err| Error::io(&p, err))?;
        BinaryMask::from_png(&bytes)
    }
}
