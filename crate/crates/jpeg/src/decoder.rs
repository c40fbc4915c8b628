//! Baseline (and extended-sequential Huffman) JPEG parser that exposes the
//! quantized DCT coefficients exactly as stored in the entropy-coded data.

use crate::color::ycbcr_to_rgb;
use crate::dct::idct;
use crate::huffman::DecodeTable;
use crate::tables::ZIGZAG;
use crate::JpegError;

/// Coding process declared by the frame header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodingMode {
    Baseline,
    ExtendedSequential,
    Progressive,
    Lossless,
    Hierarchical,
    Arithmetic,
}

/// Quantized coefficients of one image component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentCoefficients {
    pub id: u8,
    pub h_samp: u8,
    pub v_samp: u8,
    /// Blocks per row in the stored (MCU-padded) grid.
    pub blocks_wide: usize,
    /// Blocks per column in the stored (MCU-padded) grid.
    pub blocks_high: usize,
    /// Quantization table for this component, natural order.
    pub quant_table: [u16; 64],
    /// Coefficient blocks in raster order, each in natural (row-major) order.
    pub blocks: Vec<[i16; 64]>,
}

impl ComponentCoefficients {
    #[inline]
    pub fn block(&self, bx: usize, by: usize) -> &[i16; 64] {
        &self.blocks[by * self.blocks_wide + bx]
    }
}

/// Everything needed for coefficient-domain forensics on a baseline file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JpegCoefficients {
    pub width: u32,
    pub height: u32,
    pub components: Vec<ComponentCoefficients>,
    /// Table used by the first (luma) component.
    pub luma_quant_table: [u16; 64],
    /// Table used by the second component; equals the luma table for
    /// single-component files.
    pub chroma_quant_table: [u16; 64],
}

impl JpegCoefficients {
    pub fn luma(&self) -> &ComponentCoefficients {
        &self.components[0]
    }

    /// Reconstructs a component plane at its own (possibly subsampled)
    /// resolution, cropped to the component's nominal dimensions.
    pub fn component_plane(&self, index: usize) -> (Vec<u8>, usize, usize) {
        let comp = &self.components[index];
        let (hmax, vmax) = self.max_sampling();
        let cw = (self.width as usize * comp.h_samp as usize).div_ceil(hmax);
        let ch = (self.height as usize * comp.v_samp as usize).div_ceil(vmax);
        let stride = comp.blocks_wide * 8;
        let mut full = vec![0u8; stride * comp.blocks_high * 8];
        let mut deq = [0.0f64; 64];
        for by in 0..comp.blocks_high {
            for bx in 0..comp.blocks_wide {
                let block = comp.block(bx, by);
                for i in 0..64 {
                    deq[i] = f64::from(block[i]) * f64::from(comp.quant_table[i]);
                }
                let spatial = idct(&deq);
                for y in 0..8 {
                    let row = (by * 8 + y) * stride + bx * 8;
                    for x in 0..8 {
                        full[row + x] = (spatial[y * 8 + x] + 128.0).round().clamp(0.0, 255.0) as u8;
                    }
                }
            }
        }
        let mut plane = vec![0u8; cw * ch];
        for y in 0..ch {
            plane[y * cw..(y + 1) * cw].copy_from_slice(&full[y * stride..y * stride + cw]);
        }
        (plane, cw, ch)
    }

    fn max_sampling(&self) -> (usize, usize) {
        let h = self.components.iter().map(|c| c.h_samp as usize).max().unwrap_or(1);
        let v = self.components.iter().map(|c| c.v_samp as usize).max().unwrap_or(1);
        (h, v)
    }

    /// Full pixel decode to interleaved RGB (grayscale expanded to 3 channels).
    pub fn to_rgb(&self) -> Vec<u8> {
        let (w, h) = (self.width as usize, self.height as usize);
        let (hmax, vmax) = self.max_sampling();
        let planes: Vec<_> = (0..self.components.len())
            .map(|i| self.component_plane(i))
            .collect();
        let sample = |idx: usize, x: usize, y: usize| -> u8 {
            let comp = &self.components[idx];
            let (ref plane, cw, ch) = planes[idx];
            let sx = (x * comp.h_samp as usize / hmax).min(cw - 1);
            let sy = (y * comp.v_samp as usize / vmax).min(ch - 1);
            plane[sy * cw + sx]
        };
        let mut out = vec![0u8; w * h * 3];
        for y in 0..h {
            for x in 0..w {
                let o = (y * w + x) * 3;
                if self.components.len() >= 3 {
                    let (r, g, b) = ycbcr_to_rgb(sample(0, x, y), sample(1, x, y), sample(2, x, y));
                    out[o] = r;
                    out[o + 1] = g;
                    out[o + 2] = b;
                } else {
                    let v = sample(0, x, y);
                    out[o..o + 3].copy_from_slice(&[v, v, v]);
                }
            }
        }
        out
    }
}

struct FrameComponent {
    id: u8,
    h: u8,
    v: u8,
    tq: u8,
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> Result<u8, JpegError> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or(JpegError::Malformed("unexpected end of data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16, JpegError> {
        Ok(u16::from(self.u8()?) << 8 | u16::from(self.u8()?))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], JpegError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or(JpegError::Malformed("segment exceeds data"))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn segment(&mut self) -> Result<&'a [u8], JpegError> {
        let len = self.u16()? as usize;
        if len < 2 {
            return Err(JpegError::Malformed("segment length below 2"));
        }
        self.take(len - 2)
    }

    fn next_marker(&mut self) -> Result<u8, JpegError> {
        // skip fill bytes and any garbage before a marker
        loop {
            let b = self.u8()?;
            if b != 0xff {
                continue;
            }
            let mut m = self.u8()?;
            while m == 0xff {
                m = self.u8()?;
            }
            if m != 0x00 {
                return Ok(m);
            }
        }
    }
}

/// Entropy-coded segment bit reader; yields zero bits once a marker is hit.
struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u32,
    nbits: u32,
    marker: Option<u8>,
    truncated: bool,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8], pos: usize) -> Self {
        Self { data, pos, acc: 0, nbits: 0, marker: None, truncated: false }
    }

    fn fill(&mut self) {
        while self.nbits <= 24 {
            let byte = if self.marker.is_some() {
                0
            } else if self.pos >= self.data.len() {
                self.truncated = true;
                0
            } else {
                let b = self.data[self.pos];
                if b == 0xff {
                    let next = self.data.get(self.pos + 1).copied().unwrap_or(0xd9);
                    if next == 0x00 {
                        self.pos += 2;
                        0xff
                    } else {
                        self.marker = Some(next);
                        0
                    }
                } else {
                    self.pos += 1;
                    b
                }
            };
            self.acc |= u32::from(byte) << (24 - self.nbits);
            self.nbits += 8;
        }
    }

    #[inline]
    fn bit(&mut self) -> u32 {
        if self.nbits == 0 {
            self.fill();
        }
        let b = self.acc >> 31;
        self.acc <<= 1;
        self.nbits -= 1;
        b
    }

    fn bits(&mut self, n: u32) -> u32 {
        let mut v = 0;
        for _ in 0..n {
            v = (v << 1) | self.bit();
        }
        v
    }

    fn receive_extend(&mut self, size: u32) -> i32 {
        if size == 0 {
            return 0;
        }
        let v = self.bits(size) as i32;
        if v < (1 << (size - 1)) {
            v - (1 << size) + 1
        } else {
            v
        }
    }

    /// Discards buffered bits and consumes an expected RSTn marker.
    fn restart(&mut self) -> Result<(), JpegError> {
        self.acc = 0;
        self.nbits = 0;
        if self.marker.is_none() {
            // locate the marker
            while self.pos + 1 < self.data.len() {
                if self.data[self.pos] == 0xff && self.data[self.pos + 1] != 0x00 {
                    self.marker = Some(self.data[self.pos + 1]);
                    break;
                }
                self.pos += 1;
            }
        }
        match self.marker {
            Some(m) if (0xd0..=0xd7).contains(&m) => {
                self.pos += 2;
                self.marker = None;
                Ok(())
            }
            _ => Err(JpegError::Malformed("missing restart marker")),
        }
    }

    /// Byte position just after the entropy-coded data.
    fn end_position(&self) -> usize {
        let mut p = self.pos;
        while p + 1 < self.data.len() {
            if self.data[p] == 0xff && self.data[p + 1] != 0x00 && !(0xd0..=0xd7).contains(&self.data[p + 1]) {
                return p;
            }
            p += 1;
        }
        self.data.len()
    }
}

fn mode_for_sof(marker: u8) -> Option<CodingMode> {
    match marker {
        0xc0 => Some(CodingMode::Baseline),
        0xc1 => Some(CodingMode::ExtendedSequential),
        0xc2 => Some(CodingMode::Progressive),
        0xc3 => Some(CodingMode::Lossless),
        0xc5..=0xc7 => Some(CodingMode::Hierarchical),
        0xc9..=0xcb | 0xcd..=0xcf => Some(CodingMode::Arithmetic),
        _ => None,
    }
}

/// Parses the frame header only and reports the coding process.
pub fn coding_mode(bytes: &[u8]) -> Result<CodingMode, JpegError> {
    let mut r = Reader { data: bytes, pos: 0 };
    if r.u8()? != 0xff || r.u8()? != 0xd8 {
        return Err(JpegError::Malformed("missing SOI marker"));
    }
    loop {
        let m = r.next_marker()?;
        if let Some(mode) = mode_for_sof(m) {
            return Ok(mode);
        }
        match m {
            0xd8 | 0x01 | 0xd0..=0xd7 => {}
            0xd9 | 0xda => return Err(JpegError::Malformed("no frame header before scan")),
            _ => {
                r.segment()?;
            }
        }
    }
}

/// Parses a baseline-sequential JPEG into quantized coefficients.
pub fn read_coefficients(bytes: &[u8]) -> Result<JpegCoefficients, JpegError> {
    let mut r = Reader { data: bytes, pos: 0 };
    if r.u8()? != 0xff || r.u8()? != 0xd8 {
        return Err(JpegError::Malformed("missing SOI marker"));
    }
    let mut qtables: [Option<[u16; 64]>; 4] = [None; 4];
    let mut dc_tables: [Option<DecodeTable>; 4] = Default::default();
    let mut ac_tables: [Option<DecodeTable>; 4] = Default::default();
    let mut frame: Option<(u32, u32, Vec<FrameComponent>)> = None;
    let mut coefs: Vec<ComponentCoefficients> = Vec::new();
    let mut restart_interval = 0usize;
    let mut scans = 0usize;

    loop {
        let marker = r.next_marker()?;
        match marker {
            0xd9 => break,
            0xd8 | 0x01 | 0xd0..=0xd7 => {}
            0xdb => {
                let seg = r.segment()?;
                let mut p = 0;
                while p < seg.len() {
                    let pq = seg[p] >> 4;
                    let tq = (seg[p] & 0x0f) as usize;
                    p += 1;
                    if tq > 3 || pq > 1 {
                        return Err(JpegError::Malformed("bad quantization table header"));
                    }
                    let mut table = [0u16; 64];
                    for &n in ZIGZAG.iter() {
                        let v = if pq == 0 {
                            let v = *seg.get(p).ok_or(JpegError::Malformed("short DQT"))?;
                            p += 1;
                            u16::from(v)
                        } else {
                            let hi = *seg.get(p).ok_or(JpegError::Malformed("short DQT"))?;
                            let lo = *seg.get(p + 1).ok_or(JpegError::Malformed("short DQT"))?;
                            p += 2;
                            u16::from(hi) << 8 | u16::from(lo)
                        };
                        if v == 0 {
                            return Err(JpegError::Malformed("zero quantization entry"));
                        }
                        table[n] = v;
                    }
                    qtables[tq] = Some(table);
                }
            }
            0xc4 => {
                let seg = r.segment()?;
                let mut p = 0;
                while p < seg.len() {
                    let tc = seg[p] >> 4;
                    let th = (seg[p] & 0x0f) as usize;
                    if tc > 1 || th > 3 {
                        return Err(JpegError::Malformed("bad Huffman table header"));
                    }
                    let bits: [u8; 16] = seg
                        .get(p + 1..p + 17)
                        .ok_or(JpegError::Malformed("short DHT"))?
                        .try_into()
                        .unwrap();
                    let n: usize = bits.iter().map(|&b| b as usize).sum();
                    let values = seg
                        .get(p + 17..p + 17 + n)
                        .ok_or(JpegError::Malformed("short DHT"))?
                        .to_vec();
                    let table = DecodeTable::new(&bits, values)?;
                    if tc == 0 {
                        dc_tables[th] = Some(table);
                    } else {
                        ac_tables[th] = Some(table);
                    }
                    p += 17 + n;
                }
            }
            0xdd => {
                let seg = r.segment()?;
                if seg.len() < 2 {
                    return Err(JpegError::Malformed("short DRI"));
                }
                restart_interval = (usize::from(seg[0]) << 8) | usize::from(seg[1]);
            }
            m if mode_for_sof(m).is_some() => {
                let mode = mode_for_sof(m).unwrap();
                if !matches!(mode, CodingMode::Baseline | CodingMode::ExtendedSequential) {
                    return Err(JpegError::Unsupported(mode));
                }
                let seg = r.segment()?;
                if seg.len() < 6 {
                    return Err(JpegError::Malformed("short SOF"));
                }
                if seg[0] != 8 {
                    return Err(JpegError::Malformed("only 8-bit precision is supported"));
                }
                let height = u32::from(seg[1]) << 8 | u32::from(seg[2]);
                let width = u32::from(seg[3]) << 8 | u32::from(seg[4]);
                let n = seg[5] as usize;
                if width == 0 || height == 0 {
                    return Err(JpegError::Malformed("zero frame dimension"));
                }
                if n != 1 && n != 3 {
                    return Err(JpegError::Malformed("only 1 or 3 components are supported"));
                }
                if seg.len() < 6 + 3 * n {
                    return Err(JpegError::Malformed("short SOF"));
                }
                let comps: Vec<FrameComponent> = (0..n)
                    .map(|i| {
                        let b = &seg[6 + 3 * i..9 + 3 * i];
                        FrameComponent { id: b[0], h: b[1] >> 4, v: b[1] & 0x0f, tq: b[2] }
                    })
                    .collect();
                if comps.iter().any(|c| !(1..=4).contains(&c.h) || !(1..=4).contains(&c.v) || c.tq > 3) {
                    return Err(JpegError::Malformed("bad component sampling"));
                }
                let hmax = comps.iter().map(|c| c.h as usize).max().unwrap();
                let vmax = comps.iter().map(|c| c.v as usize).max().unwrap();
                let mcux = (width as usize).div_ceil(8 * hmax);
                let mcuy = (height as usize).div_ceil(8 * vmax);
                coefs = comps
                    .iter()
                    .map(|c| {
                        let bw = mcux * c.h as usize;
                        let bh = mcuy * c.v as usize;
                        ComponentCoefficients {
                            id: c.id,
                            h_samp: c.h,
                            v_samp: c.v,
                            blocks_wide: bw,
                            blocks_high: bh,
                            quant_table: [0; 64],
                            blocks: vec![[0i16; 64]; bw * bh],
                        }
                    })
                    .collect();
                frame = Some((width, height, comps));
            }
            0xda => {
                let (width, height, comps) =
                    frame.as_ref().ok_or(JpegError::Malformed("scan before frame header"))?;
                let seg = r.segment()?;
                let ns = *seg.first().ok_or(JpegError::Malformed("short SOS"))? as usize;
                if ns == 0 || ns > comps.len() || seg.len() < 1 + 2 * ns + 3 {
                    return Err(JpegError::Malformed("bad SOS"));
                }
                let mut scan = Vec::with_capacity(ns);
                for i in 0..ns {
                    let cid = seg[1 + 2 * i];
                    let tables = seg[2 + 2 * i];
                    let ci = comps
                        .iter()
                        .position(|c| c.id == cid)
                        .ok_or(JpegError::Malformed("scan references unknown component"))?;
                    let q = qtables[comps[ci].tq as usize]
                        .ok_or(JpegError::Malformed("missing quantization table"))?;
                    coefs[ci].quant_table = q;
                    let dc = dc_tables[(tables >> 4) as usize & 3]
                        .clone()
                        .ok_or(JpegError::Malformed("missing DC table"))?;
                    let ac = ac_tables[(tables & 0x0f) as usize & 3]
                        .clone()
                        .ok_or(JpegError::Malformed("missing AC table"))?;
                    scan.push((ci, dc, ac));
                }
                let ss = seg[1 + 2 * ns];
                let se = seg[2 + 2 * ns];
                if ss != 0 || se != 63 {
                    return Err(JpegError::Malformed("sequential scan must cover 0..63"));
                }
                let end = decode_scan(
                    bytes,
                    r.pos,
                    (*width as usize, *height as usize),
                    comps,
                    &scan,
                    &mut coefs,
                    restart_interval,
                )?;
                r.pos = end;
                scans += 1;
            }
            _ => {
                r.segment()?;
            }
        }
    }

    let (width, height, _) = frame.ok_or(JpegError::Malformed("no frame header"))?;
    if scans == 0 {
        return Err(JpegError::Malformed("no scan data"));
    }
    let luma_quant_table = coefs[0].quant_table;
    let chroma_quant_table = coefs.get(1).map_or(luma_quant_table, |c| c.quant_table);
    Ok(JpegCoefficients {
        width,
        height,
        components: coefs,
        luma_quant_table,
        chroma_quant_table,
    })
}

fn decode_block(
    br: &mut BitReader<'_>,
    dc: &DecodeTable,
    ac: &DecodeTable,
    pred: &mut i32,
    out: &mut [i16; 64],
) -> Result<(), JpegError> {
    let size = u32::from(dc.decode(|| Ok(br.bit()))?);
    if size > 11 {
        return Err(JpegError::Malformed("DC category out of range"));
    }
    *pred += br.receive_extend(size);
    out[0] = *pred as i16;
    let mut k = 1;
    while k < 64 {
        let rs = ac.decode(|| Ok(br.bit()))?;
        let run = (rs >> 4) as usize;
        let size = u32::from(rs & 0x0f);
        if size == 0 {
            if run == 15 {
                k += 16;
                continue;
            }
            break;
        }
        k += run;
        if k > 63 {
            return Err(JpegError::Malformed("AC run past end of block"));
        }
        out[ZIGZAG[k]] = br.receive_extend(size) as i16;
        k += 1;
    }
    Ok(())
}

fn decode_scan(
    data: &[u8],
    start: usize,
    (width, height): (usize, usize),
    comps: &[FrameComponent],
    scan: &[(usize, DecodeTable, DecodeTable)],
    coefs: &mut [ComponentCoefficients],
    restart_interval: usize,
) -> Result<usize, JpegError> {
    let mut br = BitReader::new(data, start);
    let mut preds = vec![0i32; comps.len()];
    let hmax = comps.iter().map(|c| c.h as usize).max().unwrap();
    let vmax = comps.iter().map(|c| c.v as usize).max().unwrap();

    if scan.len() == 1 {
        // non-interleaved: the component's own block grid, not MCU-padded
        let (ci, ref dc, ref ac) = scan[0];
        let c = &comps[ci];
        let cw = (width * c.h as usize).div_ceil(hmax);
        let ch = (height * c.v as usize).div_ceil(vmax);
        let (bw, bh) = (cw.div_ceil(8), ch.div_ceil(8));
        let mut count = 0usize;
        for by in 0..bh {
            for bx in 0..bw {
                if restart_interval > 0 && count > 0 && count.is_multiple_of(restart_interval) {
                    br.restart()?;
                    preds.iter_mut().for_each(|p| *p = 0);
                }
                let stride = coefs[ci].blocks_wide;
                let block = &mut coefs[ci].blocks[by * stride + bx];
                decode_block(&mut br, dc, ac, &mut preds[ci], block)?;
                count += 1;
            }
        }
    } else {
        let mcux = width.div_ceil(8 * hmax);
        let mcuy = height.div_ceil(8 * vmax);
        let mut count = 0usize;
        for my in 0..mcuy {
            for mx in 0..mcux {
                if restart_interval > 0 && count > 0 && count.is_multiple_of(restart_interval) {
                    br.restart()?;
                    preds.iter_mut().for_each(|p| *p = 0);
                }
                for (ci, dc, ac) in scan {
                    let c = &comps[*ci];
                    for v in 0..c.v as usize {
                        for h in 0..c.h as usize {
                            let bx = mx * c.h as usize + h;
                            let by = my * c.v as usize + v;
                            let stride = coefs[*ci].blocks_wide;
                            let block = &mut coefs[*ci].blocks[by * stride + bx];
                            decode_block(&mut br, dc, ac, &mut preds[*ci], block)?;
                        }
                    }
                }
                count += 1;
            }
        }
    }
    if br.truncated {
        return Err(JpegError::Malformed("truncated entropy-coded data"));
    }
    Ok(br.end_position())
}
