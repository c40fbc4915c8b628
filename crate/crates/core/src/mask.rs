//! Binary masks (ground truth and thresholded predictions).

use crate::error::{Error, Result};
use crate::image_io::{decode_png_gray, encode_png_gray};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!("{} mask cells for {width}x{height}", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Nearest-neighbour resampling.
    pub fn resize_nearest(&self, width: usize, height: usize) -> BinaryMask {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let data = (0..height)
            .flat_map(|y| {
                let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
                (0..width).map(move |x| {
                    let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                    (sx.min(self.width - 1), sy.min(self.height - 1))
                })
            })
            .map(|(x, y)| self.get(x, y))
            .collect();
        BinaryMask { width, height, data }
    }

    /// 8-bit PNG with 0 / 255 levels.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let gray: Vec<u8> = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        encode_png_gray(self.width as u32, self.height as u32, &gray)
    }

    /// Any gray level above 127 counts as set.
    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let (w, h, gray) = decode_png_gray(bytes)?;
        Ok(Self { width: w as usize, height: h as usize, data: gray.iter().map(|&g| g > 127).collect() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let mut m = BinaryMask::empty(20, 17);
        m.set(3, 4, true);
        m.set(19, 16, true);
        let back = BinaryMask::from_png(&m.to_png().unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.count(), 2);
    }

    #[test]
    fn nearest_resize_halves() {
        let m = BinaryMask::new(4, 2, vec![true, true, false, false, true, true, false, false]).unwrap();
        let r = m.resize_nearest(2, 1);
        assert_eq!(r.data(), &[true, false]);
    }
}
