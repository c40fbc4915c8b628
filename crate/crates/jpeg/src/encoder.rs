//! Baseline-sequential JFIF encoder: 4:4:4 YCbCr, Annex K tables scaled by
//! quality, standard Huffman tables, no restart markers.

use crate::color::rgb_to_ycbcr;
use crate::dct::fdct;
use crate::huffman::EncodeTable;
use crate::tables::{self, ZIGZAG};
use crate::JpegError;

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn new(out: Vec<u8>) -> Self {
        Self { out, acc: 0, nbits: 0 }
    }

    fn put(&mut self, code: u32, len: u32) {
        debug_assert!(len <= 16);
        if len == 0 {
            return;
        }
        self.acc = (self.acc << len) | (code & ((1u32 << len) - 1));
        self.nbits += len;
        while self.nbits >= 8 {
            let byte = ((self.acc >> (self.nbits - 8)) & 0xff) as u8;
            self.out.push(byte);
            if byte == 0xff {
                self.out.push(0x00);
            }
            self.nbits -= 8;
        }
        self.acc &= (1u32 << self.nbits) - 1;
    }

    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            let pad = 8 - self.nbits;
            self.put((1 << pad) - 1, pad);
        }
        self.out
    }
}

/// Magnitude category and the appended bits of a DC difference or AC value.
#[inline]
fn category(v: i32) -> (u32, u32) {
    if v == 0 {
        return (0, 0);
    }
    let mag = v.unsigned_abs();
    let size = 32 - mag.leading_zeros();
    let bits = if v < 0 {
        (v - 1) as u32 & ((1 << size) - 1)
    } else {
        v as u32
    };
    (size, bits)
}

struct Channel<'a> {
    plane: &'a [u8],
    quant: [u16; 64],
    dc: &'a EncodeTable,
    ac: &'a EncodeTable,
    pred: i32,
}

fn segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    out.extend_from_slice(&[0xff, marker]);
    let len = (payload.len() + 2) as u16;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(payload);
}

fn dht_payload(class_id: u8, bits: &[u8; 16], values: &[u8]) -> Vec<u8> {
    let mut p = vec![class_id];
    p.extend_from_slice(bits);
    p.extend_from_slice(values);
    p
}

/// Encodes a row-major RGB buffer as a baseline JPEG at `quality` (1..=100).
pub fn encode_rgb(rgb: &[u8], width: u32, height: u32, quality: u8) -> Result<Vec<u8>, JpegError> {
    if width == 0 || height == 0 || width > 65535 || height > 65535 {
        return Err(JpegError::InvalidInput("dimensions must be in 1..=65535"));
    }
    if rgb.len() != width as usize * height as usize * 3 {
        return Err(JpegError::InvalidInput("buffer length does not match dimensions"));
    }
    if !(1..=100).contains(&quality) {
        return Err(JpegError::InvalidInput("quality must be in 1..=100"));
    }
    let (w, h) = (width as usize, height as usize);
    let mut planes = [vec![0u8; w * h], vec![0u8; w * h], vec![0u8; w * h]];
    for (i, px) in rgb.chunks_exact(3).enumerate() {
        let (y, cb, cr) = rgb_to_ycbcr(px[0], px[1], px[2]);
        planes[0][i] = y;
        planes[1][i] = cb;
        planes[2][i] = cr;
    }

    let (luma_q, chroma_q) = tables::quant_tables(quality);
    let dc_l = EncodeTable::new(&tables::DC_LUMA_BITS, &tables::DC_LUMA_VALUES);
    let ac_l = EncodeTable::new(&tables::AC_LUMA_BITS, &tables::AC_LUMA_VALUES);
    let dc_c = EncodeTable::new(&tables::DC_CHROMA_BITS, &tables::DC_CHROMA_VALUES);
    let ac_c = EncodeTable::new(&tables::AC_CHROMA_BITS, &tables::AC_CHROMA_VALUES);

    let mut out = Vec::with_capacity(w * h / 2 + 1024);
    out.extend_from_slice(&[0xff, 0xd8]);
    segment(
        &mut out,
        0xe0,
        &[b'J', b'F', b'I', b'F', 0, 1, 1, 0, 0, 1, 0, 1, 0, 0],
    );
    // DQT: 8-bit precision, entries in zig-zag order
    for (id, table) in [(0u8, &luma_q), (1u8, &chroma_q)] {
        let mut p = vec![id];
        p.extend(ZIGZAG.iter().map(|&n| table[n] as u8));
        segment(&mut out, 0xdb, &p);
    }
    let mut sof = vec![8];
    sof.extend_from_slice(&(height as u16).to_be_bytes());
    sof.extend_from_slice(&(width as u16).to_be_bytes());
    sof.push(3);
    sof.extend_from_slice(&[1, 0x11, 0, 2, 0x11, 1, 3, 0x11, 1]);
    segment(&mut out, 0xc0, &sof);
    segment(&mut out, 0xc4, &dht_payload(0x00, &tables::DC_LUMA_BITS, &tables::DC_LUMA_VALUES));
    segment(&mut out, 0xc4, &dht_payload(0x10, &tables::AC_LUMA_BITS, &tables::AC_LUMA_VALUES));
    segment(&mut out, 0xc4, &dht_payload(0x01, &tables::DC_CHROMA_BITS, &tables::DC_CHROMA_VALUES));
    segment(&mut out, 0xc4, &dht_payload(0x11, &tables::AC_CHROMA_BITS, &tables::AC_CHROMA_VALUES));
    segment(&mut out, 0xda, &[3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]);

    let mut channels = [
        Channel { plane: &planes[0], quant: luma_q, dc: &dc_l, ac: &ac_l, pred: 0 },
        Channel { plane: &planes[1], quant: chroma_q, dc: &dc_c, ac: &ac_c, pred: 0 },
        Channel { plane: &planes[2], quant: chroma_q, dc: &dc_c, ac: &ac_c, pred: 0 },
    ];

    let mut writer = BitWriter::new(out);
    let bw = w.div_ceil(8);
    let bh = h.div_ceil(8);
    let mut block = [0.0f64; 64];
    for by in 0..bh {
        for bx in 0..bw {
            for ch in channels.iter_mut() {
                // edge replication for partial blocks
                for y in 0..8 {
                    let sy = (by * 8 + y).min(h - 1);
                    for x in 0..8 {
                        let sx = (bx * 8 + x).min(w - 1);
                        block[y * 8 + x] = f64::from(ch.plane[sy * w + sx]) - 128.0;
                    }
                }
                let coefs = fdct(&block);
                let mut q = [0i32; 64];
                for (k, &n) in ZIGZAG.iter().enumerate() {
                    q[k] = (coefs[n] / f64::from(ch.quant[n])).round() as i32;
                }
                encode_block(&mut writer, &q, ch);
            }
        }
    }
    let mut out = writer.finish();
    out.extend_from_slice(&[0xff, 0xd9]);
    Ok(out)
}

fn encode_block(writer: &mut BitWriter, zz: &[i32; 64], ch: &mut Channel<'_>) {
    let diff = zz[0] - ch.pred;
    ch.pred = zz[0];
    let (size, bits) = category(diff);
    let (code, len) = ch.dc.get(size as u8);
    writer.put(u32::from(code), u32::from(len));
    writer.put(bits, size);

    let mut run = 0u32;
    for &v in &zz[1..] {
        if v == 0 {
            run += 1;
            continue;
        }
        while run > 15 {
            let (code, len) = ch.ac.get(0xf0);
            writer.put(u32::from(code), u32::from(len));
            run -= 16;
        }
        let (size, bits) = category(v);
        let (code, len) = ch.ac.get(((run << 4) | size) as u8);
        writer.put(u32::from(code), u32::from(len));
        writer.put(bits, size);
        run = 0;
    }
    if run > 0 {
        let (code, len) = ch.ac.get(0x00);
        writer.put(u32::from(code), u32::from(len));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories() {
        assert_eq!(category(0), (0, 0));
        assert_eq!(category(1), (1, 1));
        assert_eq!(category(-1), (1, 0));
        assert_eq!(category(-3), (2, 0));
        assert_eq!(category(5), (3, 5));
        assert_eq!(category(-5), (3, 2));
        assert_eq!(category(1023), (10, 1023));
    }

    #[test]
    fn rejects_bad_quality() {
        let rgb = vec![0u8; 16 * 16 * 3];
        assert!(encode_rgb(&rgb, 16, 16, 0).is_err());
        assert!(encode_rgb(&rgb, 16, 16, 101).is_err());
    }

    #[test]
    fn starts_and_ends_with_markers() {
        let rgb = vec![90u8; 20 * 20 * 3];
        let bytes = encode_rgb(&rgb, 20, 20, 75).unwrap();
        assert_eq!(&bytes[..3], &[0xff, 0xd8, 0xff]);
        assert_eq!(&bytes[bytes.len() - 2..], &[0xff, 0xd9]);
    }
}
