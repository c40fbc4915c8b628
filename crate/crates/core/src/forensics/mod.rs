//! The forensic module pool.
//!
//! Every module maps an image (plus, for coefficient-domain modules, the
//! original JPEG bytes) to a raw anomaly grid; [`run_module`] resamples it to
//! the image size and min-max normalizes it into a [`Heatmap`].
//!
//! The registry names the full fifteen-plus-one pool. Seven modules are
//! implemented; the rest are registered so their ids and embedding slots are
//! stable, but running them yields [`Error::ModuleNotImplemented`].

mod adq;
mod blk;
mod cfa;
mod dct;
mod ela;
mod ghost;
mod noise;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::heatmap::{normalize_heatmap, Heatmap, RawGrid};
use crate::image_io::{jpeg_coefficients, sniff_format, ImageBuffer, JpegCoefficients, SourceFormat};

pub use adq::Adq1Params;
pub use blk::BlkParams;
pub use cfa::Cfa1Params;
pub use dct::DctParams;
pub use ela::{ela_raw_pixels, ElaParams};
pub use ghost::GhostParams;
pub use noise::{haar_hh, Noi1Params};

/// Stable module identifier; doubles as the selector's embedding row.
pub type ModuleId = u16;

macro_rules! module_kinds {
    ($($variant:ident = $id:literal => $name:literal),* $(,)?) => {
        /// Every module name the pool knows about.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum ModuleKind {
            $($variant),*
        }

        impl ModuleKind {
            pub const ALL: &'static [ModuleKind] = &[$(ModuleKind::$variant),*];

            pub fn id(self) -> ModuleId {
                match self {
                    $(ModuleKind::$variant => $id),*
                }
            }

            pub fn name(self) -> &'static str {
                match self {
                    $(ModuleKind::$variant => $name),*
                }
            }

            pub fn from_id(id: ModuleId) -> Option<Self> {
                match id {
                    $($id => Some(ModuleKind::$variant),)*
                    _ => None,
                }
            }
        }

        impl FromStr for ModuleKind {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_uppercase().as_str() {
                    $($name => Ok(ModuleKind::$variant),)*
                    other => Err(Error::InvalidArgument(format!("unknown module name {other:?}"))),
                }
            }
        }
    };
}

module_kinds! {
    Ela = 0 => "ELA",
    Ghost = 1 => "GHOST",
    Noi1 = 2 => "NOI1",
    Dct = 3 => "DCT",
    Adq1 = 4 => "ADQ1",
    Blk = 5 => "BLK",
    Cfa1 = 6 => "CFA1",
    Noi2 = 7 => "NOI2",
    Noi3 = 8 => "NOI3",
    Noi4 = 9 => "NOI4",
    Noi5 = 10 => "NOI5",
    Cagi = 11 => "CAGI",
    Adq2 = 12 => "ADQ2",
    Adq3 = 13 => "ADQ3",
    Nadq = 14 => "NADQ",
    CagiInv = 15 => "CAGI_INV",
}

/// Number of registry slots (and selector embedding rows).
pub const MODULE_SLOTS: usize = 16;

impl ModuleKind {
    pub fn is_implemented(self) -> bool {
        self.id() <= ModuleKind::Cfa1.id()
    }

    pub fn requires_jpeg_coefficients(self) -> bool {
        matches!(
            self,
            ModuleKind::Dct | ModuleKind::Adq1 | ModuleKind::Adq2 | ModuleKind::Adq3 | ModuleKind::Nadq
        )
    }

    /// Modules whose cue lives in JPEG compression history.
    pub fn is_compression_cue(self) -> bool {
        matches!(
            self,
            ModuleKind::Ela
                | ModuleKind::Ghost
                | ModuleKind::Dct
                | ModuleKind::Adq1
                | ModuleKind::Adq2
                | ModuleKind::Adq3
                | ModuleKind::Nadq
                | ModuleKind::Blk
        )
    }
}

impl fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-module configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModuleConfig {
    Ela(ElaParams),
    Ghost(GhostParams),
    Noi1(Noi1Params),
    Dct(DctParams),
    Adq1(Adq1Params),
    Blk(BlkParams),
    Cfa1(Cfa1Params),
    Unimplemented,
}

impl ModuleConfig {
    pub fn default_for(kind: ModuleKind) -> Self {
        match kind {
            ModuleKind::Ela => ModuleConfig::Ela(ElaParams::default()),
            ModuleKind::Ghost => ModuleConfig::Ghost(GhostParams::default()),
            ModuleKind::Noi1 => ModuleConfig::Noi1(Noi1Params::default()),
            ModuleKind::Dct => ModuleConfig::Dct(DctParams::default()),
            ModuleKind::Adq1 => ModuleConfig::Adq1(Adq1Params::default()),
            ModuleKind::Blk => ModuleConfig::Blk(BlkParams::default()),
            ModuleKind::Cfa1 => ModuleConfig::Cfa1(Cfa1Params::default()),
            _ => ModuleConfig::Unimplemented,
        }
    }
}

/// Identity of a configured module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleDescriptor {
    pub module_id: ModuleId,
    pub kind: ModuleKind,
    pub name: String,
    /// Hex digest of the module name and configuration; part of cache keys.
    pub param_digest: String,
    pub requires_jpeg_coefficients: bool,
    pub config: ModuleConfig,
}

impl ModuleDescriptor {
    pub fn new(kind: ModuleKind, config: ModuleConfig) -> Self {
        let mut h = Sha256::new();
        h.update(kind.name().as_bytes());
        h.update(serde_json::to_vec(&config).expect("module config serializes"));
        let digest = hex::encode(&h.finalize()[..8]);
        Self {
            module_id: kind.id(),
            kind,
            name: kind.name().to_string(),
            param_digest: digest,
            requires_jpeg_coefficients: kind.requires_jpeg_coefficients(),
            config,
        }
    }

    pub fn default_for(kind: ModuleKind) -> Self {
        Self::new(kind, ModuleConfig::default_for(kind))
    }
}

/// The supernet's module set: all registered descriptors plus the subset
/// that candidate paths may draw from.
#[derive(Clone, Debug)]
pub struct Registry {
    descriptors: Vec<ModuleDescriptor>,
    active: Vec<ModuleId>,
}

impl Registry {
    /// Full registry; every implemented module is active.
    pub fn default_pool() -> Self {
        let descriptors: Vec<_> = ModuleKind::ALL.iter().map(|&k| ModuleDescriptor::default_for(k)).collect();
        let active = ModuleKind::ALL
            .iter()
            .filter(|k| k.is_implemented())
            .map(|k| k.id())
            .collect();
        Self { descriptors, active }
    }

    /// Registry whose active pool is exactly `kinds` (in the given order).
    pub fn with_active(kinds: &[ModuleKind]) -> Result<Self> {
        let mut reg = Self::default_pool();
        let mut active: Vec<ModuleId> = Vec::new();
        for &k in kinds {
            if !k.is_implemented() {
                return Err(Error::ModuleNotImplemented(k.name()));
            }
            if !active.contains(&k.id()) {
                active.push(k.id());
            }
        }
        if active.is_empty() {
            return Err(Error::EmptyPool);
        }
        reg.active = active;
        Ok(reg)
    }

    /// Replaces a module's configuration.
    pub fn configure(&mut self, kind: ModuleKind, config: ModuleConfig) {
        let slot = kind.id() as usize;
        self.descriptors[slot] = ModuleDescriptor::new(kind, config);
    }

    pub fn descriptor(&self, id: ModuleId) -> Result<&ModuleDescriptor> {
        self.descriptors.get(id as usize).ok_or(Error::UnknownModuleId(id))
    }

    pub fn active(&self) -> &[ModuleId] {
        &self.active
    }

    pub fn active_descriptors(&self) -> impl Iterator<Item = &ModuleDescriptor> {
        self.active.iter().map(|&id| &self.descriptors[id as usize])
    }

    pub fn is_active(&self, id: ModuleId) -> bool {
        self.active.contains(&id)
    }

    pub fn slots(&self) -> usize {
        self.descriptors.len()
    }
}

/// Inputs shared by all modules for one image.
pub struct ModuleInput<'a> {
    pub image: &'a ImageBuffer,
    pub coefficients: Option<&'a JpegCoefficients>,
}

/// Runs one module and returns its normalized, image-sized heatmap.
pub fn run_module(desc: &ModuleDescriptor, img: &ImageBuffer, raw_bytes: Option<&[u8]>) -> Result<Heatmap> {
    let coefs = if desc.requires_jpeg_coefficients {
        let bytes = raw_bytes
            .filter(|b| sniff_format(b) == SourceFormat::Jpeg)
            .ok_or(Error::JpegRequired(desc.kind.name()))?;
        let c = jpeg_coefficients(bytes)?;
        if c.width != img.width() || c.height != img.height() {
            return Err(Error::DimensionMismatch("JPEG bytes do not match the image".into()));
        }
        Some(c)
    } else {
        None
    };
    let input = ModuleInput { image: img, coefficients: coefs.as_ref() };
    let raw = raw_map(desc, &input)?;
    let full = raw.resize_bilinear(img.width() as usize, img.height() as usize);
    normalize_heatmap(&full)
}

/// Raw (pre-normalization, possibly block-resolution) output of a module.
pub fn raw_map(desc: &ModuleDescriptor, input: &ModuleInput<'_>) -> Result<RawGrid> {
    let need_coefs = || input.coefficients.ok_or(Error::JpegRequired(desc.kind.name()));
    match &desc.config {
        ModuleConfig::Ela(p) => ela::run(p, input.image),
        ModuleConfig::Ghost(p) => ghost::run(p, input.image),
        ModuleConfig::Noi1(p) => Ok(noise::run(p, input.image)),
        ModuleConfig::Dct(p) => Ok(dct::run(p, need_coefs()?)),
        ModuleConfig::Adq1(p) => Ok(adq::run(p, need_coefs()?)),
        ModuleConfig::Blk(p) => Ok(blk::run(p, input.image)),
        ModuleConfig::Cfa1(p) => Ok(cfa::run(p, input.image)),
        ModuleConfig::Unimplemented => Err(Error::ModuleNotImplemented(desc.kind.name())),
    }
}

/// Dequantized luma coefficients per block, natural order.
pub(crate) fn dequantized_luma(coefs: &JpegCoefficients) -> (usize, usize, Vec<[f64; 64]>) {
    let luma = coefs.luma();
    let bw = (coefs.width as usize).div_ceil(8).min(luma.blocks_wide);
    let bh = (coefs.height as usize).div_ceil(8).min(luma.blocks_high);
    let mut out = Vec::with_capacity(bw * bh);
    for by in 0..bh {
        for bx in 0..bw {
            let b = luma.block(bx, by);
            let mut d = [0.0; 64];
            for i in 0..64 {
                d[i] = f64::from(b[i]) * f64::from(luma.quant_table[i]);
            }
            out.push(d);
        }
    }
    (bw, bh, out)
}

/// Median of a slice (averaging the two middle values); 0 for empty input.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_dense_and_unique() {
        for (i, k) in ModuleKind::ALL.iter().enumerate() {
            assert_eq!(k.id() as usize, i);
            assert_eq!(ModuleKind::from_id(k.id()), Some(*k));
            assert_eq!(k.name().parse::<ModuleKind>().unwrap(), *k);
        }
        assert_eq!(ModuleKind::ALL.len(), MODULE_SLOTS);
    }

    #[test]
    fn default_pool_activates_implemented_modules() {
        let reg = Registry::default_pool();
        assert_eq!(reg.active().len(), 7);
        assert!(reg.active_descriptors().all(|d| d.kind.is_implemented()));
        assert_eq!(reg.slots(), MODULE_SLOTS);
    }

    #[test]
    fn param_digest_tracks_configuration() {
        let a = ModuleDescriptor::default_for(ModuleKind::Ela);
        let b = ModuleDescriptor::new(ModuleKind::Ela, ModuleConfig::Ela(ElaParams { quality: 80, ..ElaParams::default() }));
        assert_ne!(a.param_digest, b.param_digest);
        assert_eq!(a.param_digest, ModuleDescriptor::default_for(ModuleKind::Ela).param_digest);
    }

    #[test]
    fn stubs_are_rejected() {
        assert!(matches!(Registry::with_active(&[ModuleKind::Cagi]), Err(Error::ModuleNotImplemented(_))));
        assert!(matches!(Registry::with_active(&[]), Err(Error::EmptyPool)));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut []), 0.0);
    }
}
