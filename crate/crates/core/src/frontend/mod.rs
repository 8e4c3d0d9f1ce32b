//! Waveform-to-feature front-end.
//!
//! A 1-second clip at 44.1 kHz passes through a centered STFT (Hann window,
//! 8192-point FFT, hop 1364), a 256-band Slaney mel filterbank, and natural-log
//! compression, producing a `[256 x 33]` feature map. Per-scene averages of
//! such maps are the standard bandwidth diagnostic for this task.

mod dsp;
mod melf;
mod wav;

pub use dsp::{frame_count, hann_window, hz_to_mel, mel_breakpoints, mel_filterbank, mel_to_hz, stft_power};
pub use melf::{feature_from_bytes, feature_to_bytes, MELF_MAGIC, MELF_VERSION};
pub use wav::{decode_wav, encode_wav_16bit, Waveform};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// DSP parameters of the front-end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontendConfig {
    pub sample_rate_hz: u32,
    pub n_fft: usize,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    /// Floor applied before the log so silence maps to `ln(log_floor)`.
    pub log_floor: f64,
}

impl Default for FrontendConfig {
    /// Canonical parameters: 44.1 kHz, 8192-point window and FFT, hop 1364,
    /// 256 mel bands over the full 0..22050 Hz range.
    fn default() -> Self {
        Self {
            sample_rate_hz: 44100,
            n_fft: 8192,
            win_length: 8192,
            hop_length: 1364,
            n_mels: 256,
            f_min_hz: 0.0,
            f_max_hz: 22050.0,
            log_floor: 1e-10,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fft == 0 || self.win_length == 0 || self.win_length > self.n_fft {
            return Err(Error::Config(format!(
                "need 0 < win_length <= n_fft, got win {} fft {}",
                self.win_length, self.n_fft
            )));
        }
        if self.hop_length == 0 {
            return Err(Error::Config("hop_length must be >= 1".into()));
        }
        if self.n_mels < 2 {
            return Err(Error::Config("n_mels must be >= 2".into()));
        }
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        if !(self.f_min_hz >= 0.0 && self.f_min_hz < self.f_max_hz && self.f_max_hz <= nyquist) {
            return Err(Error::Config(format!(
                "need 0 <= f_min < f_max <= {nyquist}, got {}..{}",
                self.f_min_hz, self.f_max_hz
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        Ok(())
    }
}

/// A log-mel spectrogram with shape `[n_mels, n_frames]`.
///
/// The config is carried when the map was computed in-process; maps loaded
/// from a feature file only carry their extents.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    values: Tensor,
    config: Option<FrontendConfig>,
}

impl FeatureMap {
    pub fn new(values: Tensor, config: Option<FrontendConfig>) -> Result<Self> {
        if values.rank() != 2 {
            return Err(Error::InvalidShape {
                shape: values.shape().to_vec(),
                reason: "feature map must be rank 2 [n_mels, n_frames]".into(),
            });
        }
        Ok(Self { values, config })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Tensor {
        &mut self.values
    }

    pub fn into_values(self) -> Tensor {
        self.values
    }

    pub fn config(&self) -> Option<&FrontendConfig> {
        self.config.as_ref()
    }

    pub fn n_mels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_frames(&self) -> usize {
        self.values.shape()[1]
    }

    /// Mean over every element.
    pub fn mean(&self) -> f64 {
        self.values.data().iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Full front-end: waveform in, log-mel feature out.
pub fn log_mel(wave: &Waveform, cfg: &FrontendConfig) -> Result<FeatureMap> {
    let power = stft_power(wave, cfg)?;
    let bank = mel_filterbank(cfg)?;
    let mel = bank.matmul(&power)?;
    let floor = cfg.log_floor;
    let values = mel.map(|v| v.max(floor).ln());
    FeatureMap::new(values, Some(cfg.clone()))
}

/// Elementwise mean of a homogeneous set of feature maps.
pub fn class_average(features: &[FeatureMap]) -> Result<FeatureMap> {
    let first = features
        .first()
        .ok_or_else(|| Error::Input("cannot average an empty feature list".into()))?;
    let shape = first.values().shape();
    for (i, f) in features.iter().enumerate() {
        if f.values().shape() != shape {
            return Err(Error::Input(format!(
                "feature {i} has shape {:?}, expected {:?}",
                f.values().shape(),
                shape
            )));
        }
        if f.config() != first.config() {
            return Err(Error::Input(format!(
                "feature {i} was produced with a different front-end config"
            )));
        }
    }
    let mut acc = vec![0.0; first.values().len()];
    for f in features {
        for (a, &v) in acc.iter_mut().zip(f.values().data()) {
            *a += v;
        }
    }
    let n = features.len() as f64;
    let values = Tensor::from_vec(shape, acc.into_iter().map(|v| v / n).collect())?;
    FeatureMap::new(values, first.config.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> FrontendConfig {
        FrontendConfig {
            sample_rate_hz: 8000,
            n_fft: 64,
            win_length: 64,
            hop_length: 16,
            n_mels: 4,
            f_min_hz: 0.0,
            f_max_hz: 4000.0,
            log_floor: 1e-10,
        }
    }

    #[test]
    fn zero_waveform_hits_the_floor_everywhere() {
        let cfg = tiny_cfg();
        let wave = Waveform::new(vec![0.0; 160], 8000).unwrap();
        let feat = log_mel(&wave, &cfg).unwrap();
        let want = (1e-10f64).ln();
        assert!(feat.values().data().iter().all(|&v| v == want));
    }

    #[test]
    fn log_mel_is_monotone_in_gain() {
        let cfg = tiny_cfg();
        let samples: Vec<f64> = (0..160).map(|i| ((i as f64) * 0.21).sin() * 0.4).collect();
        let quiet = log_mel(&Waveform::new(samples.clone(), 8000).unwrap(), &cfg).unwrap();
        let loud = log_mel(
            &Waveform::new(samples.iter().map(|s| s * 2.0).collect(), 8000).unwrap(),
            &cfg,
        )
        .unwrap();
        for (a, b) in quiet.values().data().iter().zip(loud.values().data()) {
            assert!(b >= a, "gain decreased a log-mel entry: {a} -> {b}");
        }
    }

    #[test]
    fn determinism_bitwise() {
        let cfg = tiny_cfg();
        let samples: Vec<f64> = (0..160).map(|i| ((i as f64) * 0.13).cos() * 0.3).collect();
        let a = log_mel(&Waveform::new(samples.clone(), 8000).unwrap(), &cfg).unwrap();
        let b = log_mel(&Waveform::new(samples, 8000).unwrap(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn class_average_identities() {
        let cfg = tiny_cfg();
        let x = FeatureMap::new(Tensor::full(&[4, 3], 2.0).unwrap(), Some(cfg.clone())).unwrap();
        let zero = FeatureMap::new(Tensor::zeros(&[4, 3]).unwrap(), Some(cfg.clone())).unwrap();

        assert_eq!(class_average(std::slice::from_ref(&x)).unwrap(), x);
        assert_eq!(class_average(&[x.clone(), x.clone()]).unwrap(), x);

        let mid = class_average(&[zero, x]).unwrap();
        assert!(mid.values().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn class_average_rejects_empty_and_heterogeneous() {
        assert!(class_average(&[]).is_err());
        let a = FeatureMap::new(Tensor::zeros(&[4, 3]).unwrap(), None).unwrap();
        let b = FeatureMap::new(Tensor::zeros(&[4, 4]).unwrap(), None).unwrap();
        assert!(class_average(&[a, b]).is_err());
    }

    #[test]
    fn config_validation_catches_bad_ranges() {
        let mut cfg = tiny_cfg();
        cfg.f_max_hz = 9000.0; // beyond nyquist
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg();
        cfg.win_length = 128;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg();
        cfg.hop_length = 0;
        assert!(cfg.validate().is_err());
    }
}
