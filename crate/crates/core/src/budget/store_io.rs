//! Bit-exact binary serialization of weight stores.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic "SNTL" | version u8 = 1 | dtype u8 (0 = f32, 1 = f16) |
//! reserved u16 = 0 | tensor_count u32 | 2 pad bytes   (14-byte header)
//! per tensor: name_len u16 | name bytes | ndim u8 | dims u32 x ndim | data
//! trailer: CRC32 u32 over all preceding bytes
//! ```
//!
//! Tensors are written in name order, so identical stores always produce
//! identical bytes.

use super::f16::{HalfTensor, QuantizedWeightStore};
use crate::error::{Error, FormatError, Result};
use crate::model::WeightStore;
use crate::numerics::Tensor;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"SNTL";
pub const WEIGHTS_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 14;

/// Storage precision of a weights file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F16,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::F32 => 32,
            Precision::F16 => 16,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Precision::F32 => 0,
            Precision::F16 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Precision::F32),
            1 => Ok(Precision::F16),
            other => Err(FormatError::BadDtype(other).into()),
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            32 => Ok(Precision::F32),
            16 => Ok(Precision::F16),
            other => Err(Error::Config(format!("unsupported precision {other}, want 16 or 32"))),
        }
    }
}

// CRC-32 (IEEE 802.3), reflected, table-driven.
const fn crc32_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u32;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 1 != 0 { (crc >> 1) ^ 0xEDB8_8320 } else { crc >> 1 };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

const CRC_TABLE: [u32; 256] = crc32_table();

/// Standard CRC-32 checksum (as used by zip/png).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc = (crc >> 8) ^ CRC_TABLE[((crc ^ b as u32) & 0xff) as usize];
    }
    crc ^ 0xFFFF_FFFF
}

fn header(dtype: Precision, tensor_count: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.push(WEIGHTS_VERSION);
    out.push(dtype.code());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(tensor_count as u32).to_le_bytes());
    out.extend_from_slice(&[0u8; 2]);
    out
}

fn entry_header(out: &mut Vec<u8>, name: &str, shape: &[usize]) -> Result<()> {
    if name.len() > u16::MAX as usize {
        return Err(Error::Input(format!("tensor name longer than 65535 bytes: `{name}`")));
    }
    if shape.len() > u8::MAX as usize {
        return Err(Error::Input(format!("tensor `{name}` has more than 255 dimensions")));
    }
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    Ok(())
}

/// Serialize at 32-bit precision. Values are narrowed f64 -> f32.
pub fn weights_to_bytes_f32(store: &WeightStore) -> Result<Vec<u8>> {
    let mut out = header(Precision::F32, store.len());
    for (name, tensor) in store.iter() {
        entry_header(&mut out, name, tensor.shape())?;
        for &v in tensor.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Serialize a half-precision store; the stored bits are written verbatim.
pub fn quantized_to_bytes(store: &QuantizedWeightStore) -> Result<Vec<u8>> {
    let mut out = header(Precision::F16, store.len());
    for (name, tensor) in store.iter() {
        entry_header(&mut out, name, tensor.shape())?;
        for &b in tensor.bits() {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// A deserialized weights file at either precision.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedWeights {
    F32(WeightStore),
    F16(QuantizedWeightStore),
}

impl LoadedWeights {
    pub fn precision(&self) -> Precision {
        match self {
            LoadedWeights::F32(_) => Precision::F32,
            LoadedWeights::F16(_) => Precision::F16,
        }
    }

    /// Widen to the in-memory f64 store used by inference and training.
    pub fn into_store(self) -> WeightStore {
        match self {
            LoadedWeights::F32(s) => s,
            LoadedWeights::F16(q) => super::f16::dequantize(&q),
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(FormatError::Truncated(format!(
                "{what}: need {n} bytes at offset {}, {} remain",
                self.pos,
                self.bytes.len() - self.pos
            ))
            .into());
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parse a weights file, verifying the checksum before trusting anything.
pub fn weights_from_bytes(bytes: &[u8]) -> Result<LoadedWeights> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(FormatError::Truncated(format!(
            "file is {} bytes, minimum is {}",
            bytes.len(),
            HEADER_LEN + 4
        ))
        .into());
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32(body);
    if stored != computed {
        return Err(FormatError::BadChecksum { stored, computed }.into());
    }

    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4, "magic")? != WEIGHTS_MAGIC {
        return Err(FormatError::BadMagic.into());
    }
    let version = r.take(1, "version")?[0];
    if version != WEIGHTS_VERSION {
        return Err(FormatError::BadVersion(version).into());
    }
    let precision = Precision::from_code(r.take(1, "dtype")?[0])?;
    let reserved = r.u16("reserved")?;
    if reserved != 0 {
        return Err(FormatError::InvalidField(format!("reserved = {reserved}")).into());
    }
    let count = r.u32("tensor_count")? as usize;
    r.take(2, "header padding")?;

    let elem_size = match precision {
        Precision::F32 => 4,
        Precision::F16 => 2,
    };
    let mut f32_store = WeightStore::new();
    let mut f16_store = QuantizedWeightStore::new();
    for _ in 0..count {
        let name_len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| FormatError::InvalidField("name is not utf-8".into()))?
            .to_string();
        let ndim = r.take(1, "ndim")?[0] as usize;
        if ndim == 0 {
            return Err(FormatError::InvalidField(format!("tensor `{name}` has ndim 0")).into());
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32("dim")? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n > 0)
            .ok_or_else(|| FormatError::InvalidField(format!("tensor `{name}` shape {shape:?}")))?;
        let raw = r.take(len * elem_size, "tensor data")?;
        match precision {
            Precision::F32 => {
                let data: Vec<f64> = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect();
                if f32_store.contains(&name) {
                    return Err(FormatError::DuplicateName(name).into());
                }
                f32_store.put(name, Tensor::from_vec(&shape, data)?);
            }
            Precision::F16 => {
                let bits: Vec<u16> = raw
                    .chunks_exact(2)
                    .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                if f16_store.get(&name).is_some() {
                    return Err(FormatError::DuplicateName(name).into());
                }
                f16_store.insert(name, HalfTensor::new(shape, bits)?)?;
            }
        }
    }
    if r.pos != body.len() {
        return Err(
            FormatError::InvalidField(format!("{} trailing bytes", body.len() - r.pos)).into(),
        );
    }
    Ok(match precision {
        Precision::F32 => LoadedWeights::F32(f32_store),
        Precision::F16 => LoadedWeights::F16(f16_store),
    })
}
