//! Binary feature-file format.
//!
//! Layout (little-endian): magic `MELF`, version byte `0x01`, `u32` n_mels,
//! `u32` n_frames, then `n_mels * n_frames` `f32` values in row-major
//! (frequency-major) order.

use super::FeatureMap;
use crate::error::{FormatError, Result};
use crate::numerics::Tensor;

pub const MELF_MAGIC: &[u8; 4] = b"MELF";
pub const MELF_VERSION: u8 = 0x01;

/// Serialize a feature map. Values are narrowed to `f32`.
pub fn feature_to_bytes(feat: &FeatureMap) -> Vec<u8> {
    let (n_mels, n_frames) = (feat.n_mels(), feat.n_frames());
    let mut out = Vec::with_capacity(13 + 4 * n_mels * n_frames);
    out.extend_from_slice(MELF_MAGIC);
    out.push(MELF_VERSION);
    out.extend_from_slice(&(n_mels as u32).to_le_bytes());
    out.extend_from_slice(&(n_frames as u32).to_le_bytes());
    for &v in feat.values().data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Parse a feature file. The front-end config is not stored in the format,
/// so the result carries extents only.
pub fn feature_from_bytes(bytes: &[u8]) -> Result<FeatureMap> {
    if bytes.len() < 13 {
        return Err(FormatError::Truncated("header needs 13 bytes".into()).into());
    }
    if &bytes[0..4] != MELF_MAGIC {
        return Err(FormatError::BadMagic.into());
    }
    if bytes[4] != MELF_VERSION {
        return Err(FormatError::BadVersion(bytes[4]).into());
    }
    let n_mels = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let n_frames = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let expect = n_mels
        .checked_mul(n_frames)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FormatError::InvalidField("extent overflow".into()))?;
    let body = &bytes[13..];
    if body.len() != expect {
        return Err(FormatError::Truncated(format!(
            "expected {expect} payload bytes for [{n_mels} x {n_frames}], got {}",
            body.len()
        ))
        .into());
    }
    if n_mels == 0 || n_frames == 0 {
        return Err(FormatError::InvalidField("zero extent".into()).into());
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    FeatureMap::new(Tensor::from_vec(&[n_mels, n_frames], data)?, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let values: Vec<f64> = (0..12).map(|i| (i as f32 * 0.37 - 1.5) as f64).collect();
        let feat = FeatureMap::new(Tensor::from_vec(&[3, 4], values).unwrap(), None).unwrap();
        let bytes = feature_to_bytes(&feat);
        let back = feature_from_bytes(&bytes).unwrap();
        assert_eq!(back, feat);
        // bytes -> map -> bytes is the identity
        assert_eq!(feature_to_bytes(&back), bytes);
    }

    #[test]
    fn header_errors_are_distinct() {
        let feat = FeatureMap::new(Tensor::zeros(&[2, 2]).unwrap(), None).unwrap();
        let good = feature_to_bytes(&feat);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(feature_from_bytes(&bad_magic).is_err());

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(feature_from_bytes(&bad_version).is_err());

        let truncated = &good[..good.len() - 1];
        assert!(feature_from_bytes(truncated).is_err());
    }
}
