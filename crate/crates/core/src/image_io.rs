//! Image decoding, JPEG re-encoding, and coefficient access.

use std::io::Cursor;

use frame_jpeg::{CodingMode, JpegError};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use frame_jpeg::JpegCoefficients;

/// Smallest accepted width and height.
pub const MIN_DIMENSION: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Jpeg,
    Png,
    Other,
}

/// An 8-bit RGB image, row-major and interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
    source_format: SourceFormat,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, data: Vec<u8>, source_format: SourceFormat) -> Result<Self> {
        if width < MIN_DIMENSION || height < MIN_DIMENSION {
            return Err(Error::DimensionTooSmall { width, height, min: MIN_DIMENSION });
        }
        if data.len() != width as usize * height as usize * 3 {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for {width}x{height} RGB",
                data.len()
            )));
        }
        Ok(Self { width, height, data, source_format })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn source_format(&self) -> SourceFormat {
        self.source_format
    }

    pub fn with_format(mut self, format: SourceFormat) -> Self {
        self.source_format = format;
        self
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width as usize + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// BT.601 luma plane, unrounded.
    pub fn luma(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| frame_jpeg::luma(p[0], p[1], p[2]))
            .collect()
    }

    /// BT.601 gray levels rounded to 8 bits.
    pub fn gray_u8(&self) -> Vec<u8> {
        self.data
            .chunks_exact(3)
            .map(|p| frame_jpeg::luma(p[0], p[1], p[2]).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// One channel as reals.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.chunks_exact(3).map(|p| f64::from(p[c])).collect()
    }
}

/// Identifies the container from its magic bytes.
pub fn sniff_format(bytes: &[u8]) -> SourceFormat {
    if bytes.starts_with(&[0xff, 0xd8, 0xff]) {
        SourceFormat::Jpeg
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a]) {
        SourceFormat::Png
    } else {
        SourceFormat::Other
    }
}

/// Decodes PNG or JPEG bytes into an RGB buffer.
///
/// Sequential JPEGs go through the in-house decoder so that pixel and
/// coefficient views agree; progressive JPEGs fall back to a general decoder.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer> {
    let format = sniff_format(bytes);
    let (w, h, rgb) = match format {
        SourceFormat::Jpeg => match frame_jpeg::coding_mode(bytes) {
            Ok(CodingMode::Baseline | CodingMode::ExtendedSequential) => {
                frame_jpeg::decode_rgb(bytes).map_err(|e| Error::MalformedFile(e.to_string()))?
            }
            Ok(_) => decode_generic(bytes, image::ImageFormat::Jpeg)?,
            Err(e) => return Err(Error::MalformedFile(e.to_string())),
        },
        SourceFormat::Png => decode_generic(bytes, image::ImageFormat::Png)?,
        SourceFormat::Other => return Err(Error::UnsupportedFormat),
    };
    ImageBuffer::new(w, h, rgb, format)
}

fn decode_generic(bytes: &[u8], format: image::ImageFormat) -> Result<(u32, u32, Vec<u8>)> {
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| Error::MalformedFile(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok((w, h, rgb.into_raw()))
}

/// Baseline JPEG at `quality` (1..=100), 4:4:4, Annex K tables.
pub fn jpeg_reencode(img: &ImageBuffer, quality: u8) -> Result<Vec<u8>> {
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidArgument(format!("JPEG quality {quality} outside 1..=100")));
    }
    frame_jpeg::encode_rgb(&img.data, img.width, img.height, quality)
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Re-encodes at `quality` and decodes again.
pub fn jpeg_roundtrip(img: &ImageBuffer, quality: u8) -> Result<ImageBuffer> {
    let bytes = jpeg_reencode(img, quality)?;
    let (w, h, rgb) =
        frame_jpeg::decode_rgb(&bytes).map_err(|e| Error::MalformedFile(e.to_string()))?;
    ImageBuffer::new(w, h, rgb, SourceFormat::Jpeg)
}

/// Quantized DCT coefficients and tables of a sequential JPEG.
pub fn jpeg_coefficients(bytes: &[u8]) -> Result<JpegCoefficients> {
    frame_jpeg::read_coefficients(bytes).map_err(|e| match e {
        JpegError::Unsupported(mode) => Error::UnsupportedJpeg(format!("{mode:?}")),
        other => Error::MalformedFile(other.to_string()),
    })
}

/// Lossless PNG encoding of an RGB buffer.
pub fn encode_png_rgb(img: &ImageBuffer) -> Result<Vec<u8>> {
    encode_png(img.width, img.height, &img.data, image::ExtendedColorType::Rgb8)
}

/// 8-bit grayscale PNG.
pub fn encode_png_gray(width: u32, height: u32, gray: &[u8]) -> Result<Vec<u8>> {
    encode_png(width, height, gray, image::ExtendedColorType::L8)
}

fn encode_png(width: u32, height: u32, data: &[u8], color: image::ExtendedColorType) -> Result<Vec<u8>> {
    use image::ImageEncoder;
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(Cursor::new(&mut out))
        .write_image(data, width, height, color)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(out)
}

/// Decodes an 8-bit grayscale PNG (used for masks).
pub fn decode_png_gray(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>)> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::MalformedFile(e.to_string()))?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    Ok((w, h, gray.into_raw()))
}
