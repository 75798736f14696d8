//! Wire format for compressed gradients.
//!
//! Layout (little-endian):
//!   byte 0        kind tag: 0 Identity, 1 RandomK, 2 TopK, 3 Sign, 4 Quantization
//!   byte 1        value bits (32 or 64)
//!   bytes 2..=5   dimension d as u32
//!   payload       per kind, below
//!
//! Payloads. "packed" sections use LSB-first bit packing padded to a byte
//! boundary; values are IEEE-754 little-endian at the declared width.
//!   Identity      d values
//!   RandomK       u32 k, then k values. Indices are NOT transmitted: under
//!                 shared randomness the receiver re-derives them from the
//!                 round's shared stream.
//!   TopK          u32 k, packed indices (k * ceil(log2 d) bits), k values
//!   Sign          packed negative-sign bits (d bits), then the scale value
//!   Quantization  u32 s, u32 nnz, packed indices (nnz * ceil(log2 d) bits),
//!                 packed negative-sign bits (nnz bits), packed levels
//!                 (nnz * ceil(log2(s+1)) bits), then the scale value
//!
//! `cost_bits` reports the accounting model of the compressor (header and
//! byte-boundary padding excluded); the sign and level bits of Quantization
//! ride along outside the model, which counts index and scale bits only.

use crate::compressors::{ceil_log2, CompressorDraw, CompressorKind, CompressorSpec};
use crate::error::{Error, Result};
use crate::linalg::ParamVector;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Dense {
        values: Vec<f64>,
    },
    /// RandomK: values only; coordinate indices come from the shared draw.
    SparseShared {
        values: Vec<f64>,
    },
    SparseIndexed {
        indices: Vec<u32>,
        values: Vec<f64>,
    },
    SignScale {
        negatives: Vec<bool>,
        scale: f64,
    },
    Quantized {
        indices: Vec<u32>,
        negatives: Vec<bool>,
        levels: Vec<u64>,
        scale: f64,
        s: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedMessage {
    pub kind: CompressorKind,
    pub d: u32,
    pub value_bits: u32,
    pub payload: Payload,
    pub cost_bits: u64,
}

/// Round a value through the wire width so the in-memory payload always
/// equals what the receiver reconstructs.
fn wire_round(v: f64, value_bits: u32) -> f64 {
    if value_bits == 32 {
        v as f32 as f64
    } else {
        v
    }
}

impl CompressedMessage {
    pub(crate) fn new(spec: &CompressorSpec, mut payload: Payload, value_bits: u32) -> Self {
        let vb = value_bits as u64;
        let d = spec.d as u64;
        match &mut payload {
            Payload::Dense { values } | Payload::SparseShared { values } => {
                for v in values.iter_mut() {
                    *v = wire_round(*v, value_bits);
                }
            }
            Payload::SparseIndexed { values, .. } => {
                for v in values.iter_mut() {
                    *v = wire_round(*v, value_bits);
                }
            }
            Payload::SignScale { scale, .. } | Payload::Quantized { scale, .. } => {
                *scale = wire_round(*scale, value_bits);
            }
        }
        let cost_bits = match &payload {
            Payload::Dense { .. } => d * vb,
            Payload::SparseShared { values } => values.len() as u64 * vb,
            Payload::SparseIndexed { values, .. } => values.len() as u64 * (vb + ceil_log2(spec.d)),
            Payload::SignScale { .. } => d + vb,
            Payload::Quantized { indices, .. } => indices.len() as u64 * ceil_log2(spec.d) + vb,
        };
        CompressedMessage {
            kind: spec.kind,
            d: spec.d as u32,
            value_bits,
            payload,
            cost_bits,
        }
    }

    /// Reconstruct the compressed vector. RandomK messages need the shared
    /// draw that selected the coordinates.
    pub fn decode(&self, spec: &CompressorSpec, draw: &CompressorDraw) -> Result<ParamVector> {
        let d = self.d as usize;
        if d != spec.d {
            return Err(Error::DimensionMismatch {
                expected: spec.d,
                got: d,
            });
        }
        let mut out = ParamVector::zeros(d);
        match &self.payload {
            Payload::Dense { values } => {
                if values.len() != d {
                    return Err(Error::Codec("dense payload length mismatch".into()));
                }
                out = ParamVector::from_vec(values.clone());
            }
            Payload::SparseShared { values } => {
                let idx = match draw {
                    CompressorDraw::Indices(idx) => idx,
                    _ => {
                        return Err(Error::Codec(
                            "RandomK decode requires the shared index draw".into(),
                        ))
                    }
                };
                if idx.len() != values.len() {
                    return Err(Error::Codec("RandomK payload/draw length mismatch".into()));
                }
                for (&i, &v) in idx.iter().zip(values) {
                    out[i as usize] = v;
                }
            }
            Payload::SparseIndexed { indices, values } => {
                for (&i, &v) in indices.iter().zip(values) {
                    if i as usize >= d {
                        return Err(Error::Codec("index out of range".into()));
                    }
                    out[i as usize] = v;
                }
            }
            Payload::SignScale { negatives, scale } => {
                if negatives.len() != d {
                    return Err(Error::Codec("sign payload length mismatch".into()));
                }
                if *scale != 0.0 {
                    for (i, neg) in negatives.iter().enumerate() {
                        out[i] = if *neg { -scale } else { *scale };
                    }
                }
            }
            Payload::Quantized {
                indices,
                negatives,
                levels,
                scale,
                s,
            } => {
                for ((&i, &neg), &lvl) in indices.iter().zip(negatives).zip(levels) {
                    if i as usize >= d {
                        return Err(Error::Codec("index out of range".into()));
                    }
                    let mag = lvl as f64 * *scale / *s as f64;
                    out[i as usize] = if neg { -mag } else { mag };
                }
            }
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = BitWriter::new();
        w.push_byte(kind_tag(self.kind));
        w.push_byte(self.value_bits as u8);
        w.push_u32(self.d);
        let idx_bits = ceil_log2(self.d as usize) as usize;
        match &self.payload {
            Payload::Dense { values } => {
                for &v in values {
                    w.push_value(v, self.value_bits);
                }
            }
            Payload::SparseShared { values } => {
                w.push_u32(values.len() as u32);
                for &v in values {
                    w.push_value(v, self.value_bits);
                }
            }
            Payload::SparseIndexed { indices, values } => {
                w.push_u32(indices.len() as u32);
                for &i in indices {
                    w.push_bits(i as u64, idx_bits);
                }
                w.pad_to_byte();
                for &v in values {
                    w.push_value(v, self.value_bits);
                }
            }
            Payload::SignScale { negatives, scale } => {
                for &n in negatives {
                    w.push_bits(u64::from(n), 1);
                }
                w.pad_to_byte();
                w.push_value(*scale, self.value_bits);
            }
            Payload::Quantized {
                indices,
                negatives,
                levels,
                scale,
                s,
            } => {
                w.push_u32(*s);
                w.push_u32(indices.len() as u32);
                for &i in indices {
                    w.push_bits(i as u64, idx_bits);
                }
                w.pad_to_byte();
                for &n in negatives {
                    w.push_bits(u64::from(n), 1);
                }
                w.pad_to_byte();
                let lvl_bits = ceil_log2(*s as usize + 1) as usize;
                for &l in levels {
                    w.push_bits(l, lvl_bits);
                }
                w.pad_to_byte();
                w.push_value(*scale, self.value_bits);
            }
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = BitReader::new(bytes);
        let tag = r.read_byte()?;
        let value_bits = r.read_byte()? as u32;
        if value_bits != 32 && value_bits != 64 {
            return Err(Error::Codec(format!("bad value_bits {value_bits}")));
        }
        let d = r.read_u32()?;
        let idx_bits = ceil_log2(d as usize) as usize;
        let (kind, payload) = match tag {
            0 => {
                let values = r.read_values(d as usize, value_bits)?;
                (CompressorKind::Identity, Payload::Dense { values })
            }
            1 => {
                let k = r.read_u32()? as usize;
                let values = r.read_values(k, value_bits)?;
                (
                    CompressorKind::RandomK { k },
                    Payload::SparseShared { values },
                )
            }
            2 => {
                let k = r.read_u32()? as usize;
                let mut indices = Vec::with_capacity(k);
                for _ in 0..k {
                    indices.push(r.read_bits(idx_bits)? as u32);
                }
                r.align_to_byte();
                let values = r.read_values(k, value_bits)?;
                (
                    CompressorKind::TopK { k },
                    Payload::SparseIndexed { indices, values },
                )
            }
            3 => {
                let mut negatives = Vec::with_capacity(d as usize);
                for _ in 0..d {
                    negatives.push(r.read_bits(1)? != 0);
                }
                r.align_to_byte();
                let scale = r.read_value(value_bits)?;
                (
                    CompressorKind::Sign,
                    Payload::SignScale { negatives, scale },
                )
            }
            4 => {
                let s = r.read_u32()?;
                let nnz = r.read_u32()? as usize;
                let mut indices = Vec::with_capacity(nnz);
                for _ in 0..nnz {
                    indices.push(r.read_bits(idx_bits)? as u32);
                }
                r.align_to_byte();
                let mut negatives = Vec::with_capacity(nnz);
                for _ in 0..nnz {
                    negatives.push(r.read_bits(1)? != 0);
                }
                r.align_to_byte();
                let lvl_bits = ceil_log2(s as usize + 1) as usize;
                let mut levels = Vec::with_capacity(nnz);
                for _ in 0..nnz {
                    levels.push(r.read_bits(lvl_bits)?);
                }
                r.align_to_byte();
                let scale = r.read_value(value_bits)?;
                (
                    CompressorKind::Quantization { s: s as usize },
                    Payload::Quantized {
                        indices,
                        negatives,
                        levels,
                        scale,
                        s,
                    },
                )
            }
            t => return Err(Error::Codec(format!("unknown kind tag {t}"))),
        };
        let spec = CompressorSpec::new(kind, d as usize)?;
        Ok(CompressedMessage::new(&spec, payload, value_bits))
    }
}

fn kind_tag(kind: CompressorKind) -> u8 {
    match kind {
        CompressorKind::Identity => 0,
        CompressorKind::RandomK { .. } => 1,
        CompressorKind::TopK { .. } => 2,
        CompressorKind::Sign => 3,
        CompressorKind::Quantization { .. } => 4,
    }
}

/// LSB-first bit writer.
struct BitWriter {
    bytes: Vec<u8>,
    bit: usize,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter {
            bytes: Vec::new(),
            bit: 0,
        }
    }

    fn push_bits(&mut self, value: u64, nbits: usize) {
        for b in 0..nbits {
            if self.bit == 0 {
                self.bytes.push(0);
            }
            let bitval = (value >> b) & 1;
            *self.bytes.last_mut().unwrap() |= (bitval as u8) << self.bit;
            self.bit = (self.bit + 1) % 8;
        }
    }

    fn pad_to_byte(&mut self) {
        self.bit = 0;
    }

    fn push_byte(&mut self, b: u8) {
        self.pad_to_byte();
        self.bytes.push(b);
    }

    fn push_u32(&mut self, v: u32) {
        self.pad_to_byte();
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn push_value(&mut self, v: f64, value_bits: u32) {
        self.pad_to_byte();
        if value_bits == 32 {
            self.bytes.extend_from_slice(&(v as f32).to_le_bytes());
        } else {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

/// LSB-first bit reader.
struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    bit: usize,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        BitReader {
            bytes,
            pos: 0,
            bit: 0,
        }
    }

    fn read_bits(&mut self, nbits: usize) -> Result<u64> {
        let mut out = 0u64;
        for b in 0..nbits {
            if self.pos >= self.bytes.len() {
                return Err(Error::Codec("unexpected end of message".into()));
            }
            let bitval = (self.bytes[self.pos] >> self.bit) & 1;
            out |= (bitval as u64) << b;
            self.bit += 1;
            if self.bit == 8 {
                self.bit = 0;
                self.pos += 1;
            }
        }
        Ok(out)
    }

    fn align_to_byte(&mut self) {
        if self.bit != 0 {
            self.bit = 0;
            self.pos += 1;
        }
    }

    fn read_byte(&mut self) -> Result<u8> {
        self.align_to_byte();
        if self.pos >= self.bytes.len() {
            return Err(Error::Codec("unexpected end of message".into()));
        }
        let b = self.bytes[self.pos];
        self.pos += 1;
        Ok(b)
    }

    fn read_u32(&mut self) -> Result<u32> {
        self.align_to_byte();
        if self.pos + 4 > self.bytes.len() {
            return Err(Error::Codec("unexpected end of message".into()));
        }
        let v = u32::from_le_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v)
    }

    fn read_value(&mut self, value_bits: u32) -> Result<f64> {
        self.align_to_byte();
        let width = (value_bits / 8) as usize;
        if self.pos + width > self.bytes.len() {
            return Err(Error::Codec("unexpected end of message".into()));
        }
        let v = if value_bits == 32 {
            f32::from_le_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap()) as f64
        } else {
            f64::from_le_bytes(self.bytes[self.pos..self.pos + 8].try_into().unwrap())
        };
        self.pos += width;
        Ok(v)
    }

    fn read_values(&mut self, n: usize, value_bits: u32) -> Result<Vec<f64>> {
        (0..n).map(|_| self.read_value(value_bits)).collect()
    }
}
