//! IEEE 754 binary16 conversion and the half-precision weight store.
//!
//! Quantization rounds once, f64 straight to binary16 with round-to-nearest-
//! even, so no double-rounding artifacts can appear. Values outside the
//! binary16 range are an error, never a silent clamp. Widening back to f64
//! is exact.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::WeightStore;
use crate::numerics::Tensor;

/// Largest finite binary16 magnitude.
pub const F16_MAX: f64 = 65504.0;

/// Round a finite `f64` to binary16 bits (round-to-nearest-even).
/// Returns `None` for non-finite input or magnitude above [`F16_MAX`].
pub fn quantize_value(x: f64) -> Option<u16> {
    if !x.is_finite() {
        return None;
    }
    let sign: u16 = if x.is_sign_negative() { 0x8000 } else { 0 };
    let a = x.abs();
    if a > F16_MAX {
        return None;
    }
    if a == 0.0 {
        return Some(sign);
    }
    let e = ((a.to_bits() >> 52) & 0x7ff) as i32 - 1023;
    if e >= -14 {
        // Normal target: scale so the significand lands in [1024, 2048].
        // Scaling by a power of two is exact, so the single rounding step
        // is the round_ties_even below.
        let m = (a * 2f64.powi(10 - e)).round_ties_even() as u64;
        let (e, m) = if m == 2048 { (e + 1, 1024) } else { (e, m) };
        debug_assert!(e <= 15);
        Some(sign | (((e + 15) as u16) << 10) | ((m - 1024) as u16))
    } else {
        // Subnormal target: value = m * 2^-24 with m in [0, 1024).
        let m = (a * 2f64.powi(24)).round_ties_even() as u64;
        if m >= 1024 {
            Some(sign | (1 << 10)) // rounded up into the smallest normal
        } else {
            Some(sign | m as u16)
        }
    }
}

/// Exact widening of binary16 bits to `f64`.
pub fn f16_bits_to_f64(bits: u16) -> f64 {
    let sign = if bits & 0x8000 != 0 { -1.0 } else { 1.0 };
    let e = ((bits >> 10) & 0x1f) as i32;
    let m = (bits & 0x3ff) as f64;
    let mag = match e {
        0 => m * 2f64.powi(-24),
        0x1f => {
            if m == 0.0 {
                f64::INFINITY
            } else {
                f64::NAN
            }
        }
        _ => (1.0 + m / 1024.0) * 2f64.powi(e - 15),
    };
    sign * mag
}

/// A tensor stored as binary16 bit patterns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HalfTensor {
    shape: Vec<usize>,
    bits: Vec<u16>,
}

impl HalfTensor {
    pub fn new(shape: Vec<usize>, bits: Vec<u16>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || bits.len() != len {
            return Err(Error::InvalidShape {
                shape,
                reason: "half tensor shape/bits mismatch".into(),
            });
        }
        Ok(Self { shape, bits })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> &[u16] {
        &self.bits
    }

    /// Exact widening to an `f64` tensor.
    pub fn widen(&self) -> Tensor {
        Tensor::from_vec(&self.shape, self.bits.iter().map(|&b| f16_bits_to_f64(b)).collect())
            .expect("shape validated at construction")
    }
}

/// Named half-precision tensors, the 16-bit twin of [`WeightStore`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QuantizedWeightStore {
    map: BTreeMap<String, HalfTensor>,
}

impl QuantizedWeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: HalfTensor) -> Result<()> {
        let name = name.into();
        if self.map.contains_key(&name) {
            return Err(Error::Input(format!("duplicate tensor name `{name}`")));
        }
        self.map.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&HalfTensor> {
        self.map.get(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &HalfTensor)> {
        self.map.iter()
    }

    pub fn element_count(&self) -> usize {
        self.map.values().map(|t| t.bits.len()).sum()
    }
}

/// Round every weight to binary16. An out-of-range value fails with the
/// owning tensor's name.
pub fn quantize_f16(weights: &WeightStore) -> Result<QuantizedWeightStore> {
    let mut out = QuantizedWeightStore::new();
    for (name, tensor) in weights.iter() {
        let mut bits = Vec::with_capacity(tensor.len());
        for &v in tensor.data() {
            match quantize_value(v) {
                Some(b) => bits.push(b),
                None => {
                    return Err(Error::QuantizeRange {
                        tensor: name.clone(),
                        value: v,
                    })
                }
            }
        }
        out.insert(name.clone(), HalfTensor::new(tensor.shape().to_vec(), bits)?)?;
    }
    Ok(out)
}

/// Exact widening of every tensor back to f64 storage.
pub fn dequantize(q: &QuantizedWeightStore) -> WeightStore {
    let mut out = WeightStore::new();
    for (name, tensor) in q.iter() {
        out.put(name.clone(), tensor.widen());
    }
    out
}
