//! Model configurations and random inputs used across the test suites.

use asc_core::frontend::FeatureMap;
use asc_core::model::{ConvTSpec, HeadFusion, ModelConfig};
use asc_core::numerics::Tensor;
use asc_core::rng::RngStream;

/// Small but structurally complete model: 8 mels x 5 frames, two ConvT
/// blocks, hidden size 3. Every layer type is present.
pub fn tiny_model() -> ModelConfig {
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
                expand_ratio: 1.5,
                dw_multiplier: 1,
                time_kernel: 3,
                freq_kernel: 3,
                freq_stride: 2,
            },
        ],
        se_reduction: 2,
        shuffle_groups: 2,
        gru_hidden: 3,
        head_fusion: HeadFusion::Add,
        n_classes: 10,
        input_mels: 8,
        input_frames: 5,
    }
}

/// A feature map of standard-normal draws with the config's input extents.
pub fn random_feature(cfg: &ModelConfig, rng: &mut RngStream) -> FeatureMap {
    let len = cfg.input_mels * cfg.input_frames;
    let data: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
    FeatureMap::new(
        Tensor::from_vec(&[cfg.input_mels, cfg.input_frames], data).unwrap(),
        None,
    )
    .unwrap()
}

/// A random valid small config: varied block counts, expansion ratios,
/// multipliers, kernels, strides, and fusion modes.
pub fn random_small_config(rng: &mut RngStream) -> ModelConfig {
    loop {
        let shuffle_groups = 1 + rng.below(2);
        let se_reduction = 1 + rng.below(2);
        let stem = (1 + rng.below(3)) * se_reduction * shuffle_groups;
        let n_blocks = 1 + rng.below(3);
        let mut blocks = Vec::new();
        let mut channels = stem;
        for _ in 0..n_blocks {
            let expand = [1.0, 1.5, 2.0, 2.5][rng.below(4)];
            let mult = 1 + rng.below(2);
            blocks.push(ConvTSpec {
                in_channels: channels,
                expand_ratio: expand,
                dw_multiplier: mult,
                time_kernel: [1, 3, 5][rng.below(3)],
                freq_kernel: [1, 3][rng.below(2)],
                freq_stride: 1 + rng.below(2),
            });
            channels = blocks.last().unwrap().out_channels();
        }
        let cfg = ModelConfig {
            schema_version: 1,
            stem_out_channels: stem,
            block_specs: blocks,
            se_reduction,
            shuffle_groups,
            gru_hidden: 2 + rng.below(5),
            head_fusion: if rng.chance(0.5) {
                HeadFusion::Add
            } else {
                HeadFusion::Concat
            },
            n_classes: 10,
            input_mels: [8, 16, 32][rng.below(3)],
            input_frames: [5, 7, 9][rng.below(3)],
        };
        if cfg.validate().is_ok() {
            return cfg;
        }
    }
}
