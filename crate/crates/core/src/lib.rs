//! Adaptive selection and fusion of classical image-forensics modules.

pub mod error;
pub mod forensics;
pub mod heatmap;
pub mod image_io;

pub use error::{Error, Result};
pub use heatmap::{normalize_heatmap, Heatmap, RawGrid};
pub use image_io::{decode_image, ImageBuffer, SourceFormat};
pub mod features;
pub mod mask;
pub mod synth;
pub mod cache;
pub mod fusion;
pub mod metrics;
pub mod selector;
pub mod supernet;
pub mod theory;
pub mod pipeline;
