//! Bit-exact feedback frames.
//!
//! Payload packing is MSB-first: each index contributes its `width` bits
//! big-endian, concatenated left to right, with the final byte zero-padded.
//!
//! Frame wire format:
//!
//! ```text
//! magic 0xC5 0x1F | version u8 | scheme_id u8 | mask ceil(N_d/8) bytes |
//! payload_bit_len u16 LE | payload ceil(bits/8) bytes
//! ```
//!
//! The mask packs path bits MSB-first; unused trailing bits in the mask and
//! payload must be zero and are verified on decode. Header bytes are shared
//! protocol knowledge and are not charged to the feedback budget; the mask
//! and payload are: `feedback_bits = N_d + payload_bit_len`. The frame does
//! not carry `N_d` itself (it is deployment configuration), so decoding takes
//! the expected path count.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelConfig;
use crate::error::{Error, Result};

pub const FRAME_MAGIC: [u8; 2] = [0xC5, 0x1F];
pub const FRAME_VERSION: u8 = 1;

/// Quantization scheme carried in the frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Uniform = 0,
    Companded = 1,
    Adaptive = 2,
    Vector = 3,
    PathLevel = 4,
}

impl SchemeId {
    pub fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => SchemeId::Uniform,
            1 => SchemeId::Companded,
            2 => SchemeId::Adaptive,
            3 => SchemeId::Vector,
            4 => SchemeId::PathLevel,
            other => return Err(Error::Corrupt(format!("unknown scheme id {other}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SchemeId::Uniform => "uniform",
            SchemeId::Companded => "companded",
            SchemeId::Adaptive => "adaptive",
            SchemeId::Vector => "vector",
            SchemeId::PathLevel => "path_level",
        }
    }
}

/// A decoded feedback frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub version: u8,
    pub scheme: SchemeId,
    /// Path mask bits, one per original path.
    pub mask: Vec<bool>,
    /// Number of meaningful payload bits.
    pub payload_bit_len: u16,
    /// Packed payload, zero-padded to a byte boundary.
    pub payload: Vec<u8>,
    /// Declared budget charge: mask bits plus payload bits.
    pub feedback_bits: u32,
}

/// Writes bits MSB-first into a growing byte buffer.
struct BitWriter {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter { bytes: Vec::new(), bit_len: 0 }
    }

    fn push(&mut self, value: u32, width: u8) {
        for i in (0..width).rev() {
            let bit = (value >> i) & 1;
            let byte_idx = self.bit_len / 8;
            if byte_idx == self.bytes.len() {
                self.bytes.push(0);
            }
            if bit == 1 {
                self.bytes[byte_idx] |= 1 << (7 - self.bit_len % 8);
            }
            self.bit_len += 1;
        }
    }
}

/// Reads bits MSB-first.
struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0 }
    }

    fn read(&mut self, width: u8) -> Result<u32> {
        let mut v = 0u32;
        for _ in 0..width {
            let byte_idx = self.pos / 8;
            if byte_idx >= self.bytes.len() {
                return Err(Error::Corrupt(format!(
                    "buffer ends at bit {} while reading", self.pos
                )));
            }
            let bit = (self.bytes[byte_idx] >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | bit as u32;
            self.pos += 1;
        }
        Ok(v)
    }
}

fn check_widths(widths: &[u8]) -> Result<()> {
    for &w in widths {
        if !(1..=16).contains(&w) {
            return Err(Error::Config(format!("symbol width {w} outside 1..=16")));
        }
    }
    Ok(())
}

/// Packs `indices[i]` into `widths[i]` bits each, MSB-first.
pub fn pack_indices(indices: &[u32], widths: &[u8]) -> Result<Vec<u8>> {
    if indices.len() != widths.len() {
        return Err(Error::Shape(format!(
            "pack_indices: {} indices vs {} widths",
            indices.len(),
            widths.len()
        )));
    }
    check_widths(widths)?;
    let mut w = BitWriter::new();
    for (&ix, &width) in indices.iter().zip(widths) {
        if ix >= 1u32 << width {
            return Err(Error::Config(format!("index {ix} overflows width {width}")));
        }
        w.push(ix, width);
    }
    Ok(w.bytes)
}

/// Exact inverse of [`pack_indices`]. Rejects short buffers and nonzero
/// padding bits.
pub fn unpack_indices(bytes: &[u8], widths: &[u8]) -> Result<Vec<u32>> {
    check_widths(widths)?;
    let total_bits: usize = widths.iter().map(|&w| w as usize).sum();
    let needed = total_bits.div_ceil(8);
    if bytes.len() < needed {
        return Err(Error::Corrupt(format!(
            "buffer has {} bytes, {} bits need {}",
            bytes.len(),
            total_bits,
            needed
        )));
    }
    let mut r = BitReader::new(bytes);
    let mut out = Vec::with_capacity(widths.len());
    for &w in widths {
        out.push(r.read(w)?);
    }
    verify_zero_padding(bytes, total_bits, "payload")?;
    Ok(out)
}

fn verify_zero_padding(bytes: &[u8], bit_len: usize, what: &str) -> Result<()> {
    let mut r = BitReader::new(bytes);
    r.pos = bit_len;
    let tail_bits = bytes.len() * 8 - bit_len;
    for _ in 0..tail_bits {
        if r.read(1)? != 0 {
            return Err(Error::Corrupt(format!("{what} padding bits are not zero")));
        }
    }
    Ok(())
}

fn mask_bytes(mask: &[bool]) -> Vec<u8> {
    let mut w = BitWriter::new();
    for &b in mask {
        w.push(b as u32, 1);
    }
    w.bytes
}

/// Builds the frame bytes for one feedback message.
pub fn encode_frame(scheme: SchemeId, mask: &[bool], indices: &[u32], widths: &[u8]) -> Result<Vec<u8>> {
    if mask.is_empty() {
        return Err(Error::Config("encode_frame: empty path mask".into()));
    }
    let payload = pack_indices(indices, widths)?;
    let payload_bits: usize = widths.iter().map(|&w| w as usize).sum();
    if payload_bits > u16::MAX as usize {
        return Err(Error::Config(format!("payload of {payload_bits} bits exceeds u16")));
    }
    let mut out = Vec::with_capacity(4 + mask.len().div_ceil(8) + 2 + payload.len());
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.push(scheme as u8);
    out.extend_from_slice(&mask_bytes(mask));
    out.extend_from_slice(&(payload_bits as u16).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Parses and validates frame bytes. `n_paths` is the deployment's path
/// count (the mask length is not self-describing).
pub fn decode_frame(bytes: &[u8], n_paths: usize) -> Result<Frame> {
    let mask_len = n_paths.div_ceil(8);
    let min = 4 + mask_len + 2;
    if bytes.len() < min {
        return Err(Error::Corrupt(format!(
            "frame of {} bytes shorter than {min}-byte minimum",
            bytes.len()
        )));
    }
    if bytes[0..2] != FRAME_MAGIC {
        return Err(Error::Corrupt(format!(
            "bad magic {:02x} {:02x}",
            bytes[0], bytes[1]
        )));
    }
    let version = bytes[2];
    if version != FRAME_VERSION {
        return Err(Error::Corrupt(format!("unsupported frame version {version}")));
    }
    let scheme = SchemeId::from_u8(bytes[3])?;

    let mask_slice = &bytes[4..4 + mask_len];
    verify_zero_padding(mask_slice, n_paths, "mask")?;
    let mut reader = BitReader::new(mask_slice);
    let mut mask = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        mask.push(reader.read(1)? == 1);
    }

    let bit_len_off = 4 + mask_len;
    let payload_bit_len = u16::from_le_bytes([bytes[bit_len_off], bytes[bit_len_off + 1]]);
    let payload_len = (payload_bit_len as usize).div_ceil(8);
    let expected = min + payload_len;
    if bytes.len() != expected {
        return Err(Error::Corrupt(format!(
            "frame length {} does not match declared payload ({expected} expected)",
            bytes.len()
        )));
    }
    let payload = bytes[bit_len_off + 2..].to_vec();
    verify_zero_padding(&payload, payload_bit_len as usize, "payload")?;

    Ok(Frame {
        version,
        scheme,
        mask,
        payload_bit_len,
        payload,
        feedback_bits: n_paths as u32 + payload_bit_len as u32,
    })
}

/// Budget charge of a frame: mask bits plus payload bits. Header bytes are
/// excluded (static shared configuration, not channel information).
pub fn feedback_bit_count(frame: &Frame) -> u32 {
    frame.mask.len() as u32 + frame.payload_bit_len as u32
}

/// Size of one uncompressed sample in bits: every complex coefficient as a
/// pair of 32-bit floats.
pub fn raw_sample_bits(config: &ChannelConfig) -> u64 {
    (config.coeff_count() as u64) * 2 * 32
}
