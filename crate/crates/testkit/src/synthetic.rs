//! Synthetic two-tone dataset: class `park` carries a 500 Hz tone, class
//! `bus` a 4 kHz tone, both with light noise and random phase. Separable by
//! construction, so a small model must reach high training accuracy.

use std::path::Path;

use asc_core::frontend::{encode_wav_16bit, FrontendConfig, Waveform};
use asc_core::model::{ConvTSpec, HeadFusion, ModelConfig};
use asc_core::rng::RngStream;
use asc_core::training::DatasetManifest;

pub const SAMPLE_RATE: u32 = 16_000;
pub const CLIP_SAMPLES: usize = 3200; // 0.2 s

pub fn tone_clip(freq_hz: f64, rng: &mut RngStream) -> Waveform {
    let phase = rng.uniform() * std::f64::consts::TAU;
    let samples: Vec<f64> = (0..CLIP_SAMPLES)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            0.5 * (std::f64::consts::TAU * freq_hz * t + phase).sin()
                + 0.05 * (rng.uniform() * 2.0 - 1.0)
        })
        .collect();
    Waveform::new(samples, SAMPLE_RATE).unwrap()
}

/// Write `per_class` clips per class under `dir`; returns the manifest.
pub fn write_dataset(dir: &Path, per_class: usize, seed: u64) -> DatasetManifest {
    let mut rng = RngStream::new(seed);
    let mut tsv = String::from("filename\tscene_label\tdevice\n");
    for i in 0..per_class {
        for (label, freq) in [("park", 500.0), ("bus", 4000.0)] {
            let name = format!("{label}_{i:03}.wav");
            let clip = tone_clip(freq, &mut rng);
            std::fs::write(dir.join(&name), encode_wav_16bit(&clip)).unwrap();
            tsv.push_str(&format!("{name}\t{label}\ts1\n"));
        }
    }
    DatasetManifest::parse(tsv.as_bytes()).unwrap()
}

/// Front-end sized for the 16 kHz clips: 16 mel bands, 26 frames.
pub fn small_frontend() -> FrontendConfig {
    FrontendConfig {
        sample_rate_hz: SAMPLE_RATE,
        n_fft: 256,
        win_length: 256,
        hop_length: 128,
        n_mels: 16,
        f_min_hz: 0.0,
        f_max_hz: 8000.0,
        log_floor: 1e-10,
    }
}

/// Model matched to [`small_frontend`] extents.
pub fn small_model() -> ModelConfig {
    ModelConfig {
        schema_version: 1,
        stem_out_channels: 4,
        block_specs: vec![
            ConvTSpec {
                in_channels: 4,
                expand_ratio: 2.0,
                dw_multiplier: 1,
                time_kernel: 3,
                freq_kernel: 3,
                freq_stride: 2,
            },
            ConvTSpec {
                in_channels: 8,
                expand_ratio: 2.0,
                dw_multiplier: 1,
                time_kernel: 3,
                freq_kernel: 3,
                freq_stride: 2,
            },
        ],
        se_reduction: 2,
        shuffle_groups: 2,
        gru_hidden: 8,
        head_fusion: HeadFusion::Add,
        n_classes: 10,
        input_mels: 16,
        input_frames: 26, // 1 + 3200 / 128
    }
}
