//! RIFF/WAVE decoding for PCM 16/24-bit content, plus a 16-bit writer.

use crate::error::{Error, Result, WavError};

/// A decoded audio clip: samples normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("waveform must contain at least one sample".into()));
        }
        if sample_rate_hz == 0 {
            return Err(Error::Input("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Largest absolute sample value.
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, &s| m.max(s.abs()))
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

fn read_u16(bytes: &[u8], at: usize) -> Option<u16> {
    bytes.get(at..at + 2).map(|b| u16::from_le_bytes([b[0], b[1]]))
}

/// Decode a RIFF/WAVE byte stream.
///
/// Accepts integer PCM at 16 or 24 bits, mono or multichannel; multichannel
/// content is averaged down to mono. Samples are normalized by `2^(bits-1)`.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" {
        return Err(WavError::BadHeader("missing RIFF tag".into()).into());
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(WavError::BadHeader("missing WAVE tag".into()).into());
    }

    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (codec, channels, rate, bits)
    let mut data: Option<&[u8]> = None;

    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4)
            .ok_or_else(|| WavError::Truncated("chunk header".into()))? as usize;
        let body_start = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body_start + 16 > bytes.len() {
                    return Err(WavError::Truncated("fmt chunk".into()).into());
                }
                let codec = read_u16(bytes, body_start).unwrap();
                let channels = read_u16(bytes, body_start + 2).unwrap();
                let rate = read_u32(bytes, body_start + 4).unwrap();
                let bits = read_u16(bytes, body_start + 14).unwrap();
                fmt = Some((codec, channels, rate, bits));
            }
            b"data" => {
                if body_start + size > bytes.len() {
                    return Err(WavError::Truncated(format!(
                        "data chunk claims {size} bytes, {} available",
                        bytes.len() - body_start
                    ))
                    .into());
                }
                data = Some(&bytes[body_start..body_start + size]);
            }
            _ => {} // skip LIST, fact, ...
        }
        // Chunks are padded to even length.
        pos = body_start + size + (size & 1);
    }

    let (codec, channels, rate, bits) =
        fmt.ok_or_else(|| WavError::BadHeader("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| WavError::BadHeader("no data chunk".into()))?;

    if codec != 1 {
        return Err(WavError::UnsupportedCodec(format!("format tag {codec}, want PCM (1)")).into());
    }
    if bits != 16 && bits != 24 {
        return Err(WavError::UnsupportedCodec(format!("{bits}-bit PCM, want 16 or 24")).into());
    }
    if channels == 0 {
        return Err(WavError::BadHeader("zero channels".into()).into());
    }

    let bytes_per_sample = bits as usize / 8;
    let frame_size = bytes_per_sample * channels as usize;
    if data.len() % frame_size != 0 {
        return Err(WavError::Truncated("data chunk is not a whole number of frames".into()).into());
    }
    let n_frames = data.len() / frame_size;
    if n_frames == 0 {
        return Err(Error::Input("wav contains no samples".into()));
    }

    let scale = 1.0 / (1u32 << (bits - 1)) as f64;
    let mut samples = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let mut acc = 0.0;
        for c in 0..channels as usize {
            let at = f * frame_size + c * bytes_per_sample;
            let v = match bits {
                16 => i16::from_le_bytes([data[at], data[at + 1]]) as i32,
                _ => {
                    // sign-extend 24-bit little-endian
                    let raw =
                        (data[at] as i32) | ((data[at + 1] as i32) << 8) | ((data[at + 2] as i32) << 16);
                    (raw << 8) >> 8
                }
            };
            acc += v as f64 * scale;
        }
        samples.push(acc / channels as f64);
    }
    Waveform::new(samples, rate)
}

/// Encode mono samples as 16-bit PCM. Values are clamped to `[-1, 1]`.
pub fn encode_wav_16bit(wave: &Waveform) -> Vec<u8> {
    let n = wave.samples().len();
    let data_size = n * 2;
    let mut out = Vec::with_capacity(44 + data_size);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_size) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&wave.sample_rate_hz().to_le_bytes());
    out.extend_from_slice(&(wave.sample_rate_hz() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_size as u32).to_le_bytes());
    for &s in wave.samples() {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}
