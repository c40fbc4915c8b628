//! Minimal JPEG codec for compression forensics.
//!
//! The encoder writes baseline-sequential JFIF with 4:4:4 sampling, the
//! Annex K quantization tables scaled by the IJG quality mapping, and the
//! standard Huffman tables, so its output is fully determined by the pixels
//! and the quality. The decoder parses sequential Huffman-coded files down to
//! the quantized DCT coefficients, which is what double-quantization and
//! blocking analyses need and what general-purpose decoders do not expose.

mod color;
pub mod dct;
mod decoder;
mod encoder;
mod huffman;
pub mod tables;

pub use color::{luma, rgb_to_ycbcr, ycbcr_to_rgb};
pub use decoder::{coding_mode, read_coefficients, CodingMode, ComponentCoefficients, JpegCoefficients};
pub use encoder::encode_rgb;
pub use tables::{quant_tables, quality_scale, ZIGZAG};

#[derive(thiserror::Error, Debug, Clone, PartialEq, Eq)]
pub enum JpegError {
    #[error("malformed JPEG: {0}")]
    Malformed(&'static str),

    /// The file uses a coding process other than sequential Huffman.
    #[error("unsupported JPEG coding process: {0:?}")]
    Unsupported(CodingMode),

    #[error("invalid encoder input: {0}")]
    InvalidInput(&'static str),
}

/// Decodes a sequential JPEG to interleaved RGB: `(width, height, rgb)`.
pub fn decode_rgb(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>), JpegError> {
    let coefs = read_coefficients(bytes)?;
    let rgb = coefs.to_rgb();
    Ok((coefs.width, coefs.height, rgb))
}
