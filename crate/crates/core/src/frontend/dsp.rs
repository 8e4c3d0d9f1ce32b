//! STFT power spectrogram and Slaney-scale mel filterbank.
//!
//! The transform is centered: the signal is reflect-padded by `n_fft / 2` on
//! both ends, which makes the frame count `1 + floor(len / hop)`. Frames are
//! weighted by a periodic Hann window of `win_length` samples (zero-padded
//! symmetrically up to `n_fft` when shorter) and the one-sided power spectrum
//! `|X[k]|^2` is kept for bins `0 ..= n_fft / 2`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::FrontendConfig;
use crate::error::{Error, Result};
use crate::frontend::wav::Waveform;
use crate::numerics::Tensor;

/// Periodic Hann window: `w[n] = 0.5 * (1 - cos(2 pi n / len))`.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos()))
        .collect()
}

/// Index into a signal of length `n` with reflection at both edges
/// (the edge sample itself is not repeated).
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Number of frames produced for `n_samples` at hop `hop_length`.
pub fn frame_count(n_samples: usize, hop_length: usize) -> usize {
    1 + n_samples / hop_length
}

/// Centered STFT power spectrogram, shape `[n_fft/2 + 1, n_frames]`.
pub fn stft_power(wave: &Waveform, cfg: &FrontendConfig) -> Result<Tensor> {
    cfg.validate()?;
    if wave.sample_rate_hz() != cfg.sample_rate_hz {
        return Err(Error::Config(format!(
            "waveform sample rate {} does not match config {}",
            wave.sample_rate_hz(),
            cfg.sample_rate_hz
        )));
    }
    let samples = wave.samples();
    if samples.is_empty() {
        return Err(Error::Input("cannot transform an empty waveform".into()));
    }

    let n_fft = cfg.n_fft;
    let n_bins = n_fft / 2 + 1;
    let n_frames = frame_count(samples.len(), cfg.hop_length);
    let pad = n_fft / 2;

    // Window of win_length samples centered in an n_fft frame.
    let mut window = vec![0.0; n_fft];
    let offset = (n_fft - cfg.win_length) / 2;
    window[offset..offset + cfg.win_length].copy_from_slice(&hann_window(cfg.win_length));

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];

    let mut out = Tensor::zeros(&[n_bins, n_frames])?;
    let n = samples.len();
    for frame in 0..n_frames {
        let start = frame as isize * cfg.hop_length as isize - pad as isize;
        for (i, slot) in buf.iter_mut().enumerate() {
            let src = start + i as isize;
            let s = if src >= 0 && (src as usize) < n {
                samples[src as usize]
            } else {
                samples[reflect_index(src, n)]
            };
            *slot = Complex::new(s * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (bin, v) in buf.iter().take(n_bins).enumerate() {
            out.set(&[bin, frame], v.norm_sqr());
        }
    }
    Ok(out)
}

/// Hz to mel, Slaney variant (linear below 1 kHz, logarithmic above).
pub fn hz_to_mel(hz: f64) -> f64 {
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = (6.4f64).ln() / 27.0;
    if hz >= min_log_hz {
        min_log_mel + (hz / min_log_hz).ln() / logstep
    } else {
        hz / f_sp
    }
}

/// Mel to Hz, inverse of [`hz_to_mel`].
pub fn mel_to_hz(mel: f64) -> f64 {
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = (6.4f64).ln() / 27.0;
    if mel >= min_log_mel {
        min_log_hz * (logstep * (mel - min_log_mel)).exp()
    } else {
        f_sp * mel
    }
}

/// Center frequencies (Hz) of `n_mels + 2` points uniformly spaced on the
/// mel axis between `f_min` and `f_max`.
pub fn mel_breakpoints(n_mels: usize, f_min: f64, f_max: f64) -> Vec<f64> {
    let lo = hz_to_mel(f_min);
    let hi = hz_to_mel(f_max);
    let count = n_mels + 2;
    (0..count)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Triangular Slaney-scale filterbank, area-normalized, shape
/// `[n_mels, n_fft/2 + 1]`.
pub fn mel_filterbank(cfg: &FrontendConfig) -> Result<Tensor> {
    cfg.validate()?;
    let n_bins = cfg.n_fft / 2 + 1;
    let sr = cfg.sample_rate_hz as f64;
    let fft_freqs: Vec<f64> = (0..n_bins)
        .map(|k| sr / 2.0 * k as f64 / (n_bins - 1) as f64)
        .collect();
    let mel_f = mel_breakpoints(cfg.n_mels, cfg.f_min_hz, cfg.f_max_hz);

    let mut bank = Tensor::zeros(&[cfg.n_mels, n_bins])?;
    for m in 0..cfg.n_mels {
        let (lower, center, upper) = (mel_f[m], mel_f[m + 1], mel_f[m + 2]);
        // Slaney area normalization: constant energy per band.
        let enorm = 2.0 / (upper - lower);
        let mut any = false;
        for (k, &f) in fft_freqs.iter().enumerate() {
            let rise = (f - lower) / (center - lower);
            let fall = (upper - f) / (upper - center);
            let w = rise.min(fall).max(0.0);
            if w > 0.0 {
                bank.set(&[m, k], w * enorm);
                any = true;
            }
        }
        if !any {
            return Err(Error::Config(format!(
                "mel filter {m} is empty: {} bands exceed the FFT resolution",
                cfg.n_mels
            )));
        }
    }
    Ok(bank)
}
