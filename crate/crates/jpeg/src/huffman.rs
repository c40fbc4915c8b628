//! Canonical Huffman code construction (Annex C) for both directions.

use crate::JpegError;

/// Encoder lookup: code and length for each symbol value.
#[derive(Clone)]
pub struct EncodeTable {
    codes: [u16; 256],
    lengths: [u8; 256],
}

impl EncodeTable {
    pub fn new(bits: &[u8; 16], values: &[u8]) -> Self {
        let mut codes = [0u16; 256];
        let mut lengths = [0u8; 256];
        let mut code: u16 = 0;
        let mut k = 0;
        for (len_minus_one, &count) in bits.iter().enumerate() {
            for _ in 0..count {
                let sym = values[k] as usize;
                codes[sym] = code;
                lengths[sym] = (len_minus_one + 1) as u8;
                code += 1;
                k += 1;
            }
            code <<= 1;
        }
        Self { codes, lengths }
    }

    #[inline]
    pub fn get(&self, symbol: u8) -> (u16, u8) {
        (self.codes[symbol as usize], self.lengths[symbol as usize])
    }
}

/// Decoder tables following the MAXCODE/VALPTR/MINCODE procedure of F.2.2.3.
#[derive(Clone, Debug)]
pub struct DecodeTable {
    maxcode: [i32; 18],
    mincode: [i32; 17],
    valptr: [usize; 17],
    values: Vec<u8>,
}

impl DecodeTable {
    pub fn new(bits: &[u8; 16], values: Vec<u8>) -> Result<Self, JpegError> {
        let total: usize = bits.iter().map(|&b| b as usize).sum();
        if total > 256 || total != values.len() {
            return Err(JpegError::Malformed("inconsistent Huffman table"));
        }
        let mut maxcode = [-1i32; 18];
        let mut mincode = [0i32; 17];
        let mut valptr = [0usize; 17];
        let mut code: i32 = 0;
        let mut k = 0usize;
        for len in 1..=16 {
            let count = bits[len - 1] as usize;
            if count > 0 {
                valptr[len] = k;
                mincode[len] = code;
                code += count as i32;
                k += count;
                maxcode[len] = code - 1;
            }
            if code > (1 << len) {
                return Err(JpegError::Malformed("over-subscribed Huffman table"));
            }
            code <<= 1;
        }
        // sentinel so decoding terminates on corrupt data
        maxcode[17] = i32::MAX;
        Ok(Self {
            maxcode,
            mincode,
            valptr,
            values,
        })
    }

    /// Decodes one symbol; `next_bit` yields successive bits of the stream.
    pub fn decode<F>(&self, mut next_bit: F) -> Result<u8, JpegError>
    where
        F: FnMut() -> Result<u32, JpegError>,
    {
        let mut code = next_bit()? as i32;
        for len in 1..=16 {
            if self.maxcode[len] >= 0 && code <= self.maxcode[len] && code >= self.mincode[len] {
                let idx = self.valptr[len] + (code - self.mincode[len]) as usize;
                return self
                    .values
                    .get(idx)
                    .copied()
                    .ok_or(JpegError::Malformed("Huffman index out of range"));
            }
            code = (code << 1) | next_bit()? as i32;
        }
        Err(JpegError::Malformed("invalid Huffman code"))
    }
}
