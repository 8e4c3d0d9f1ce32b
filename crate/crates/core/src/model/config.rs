//! Declarative network description.
//!
//! A [`ModelConfig`] fully determines the network: the forward pass, the
//! parameter inventory, and the complexity audit are all derived from it, so
//! the three can never disagree about shapes.
//!
//! Pipeline: 3x3 stem convolution -> hybrid 2x2 pool -> channel-attention
//! gate -> a chain of ConvT blocks (pointwise expansion, channel shuffle,
//! depthwise 1D convolution along time, depthwise 1D convolution along
//! frequency with optional stride-2 downsampling), attention gates after the
//! first two blocks -> mean over time -> a GRU that walks the channel axis
//! consuming frequency profiles, fused with a parallel pointwise projection
//! -> mean over steps -> linear head.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the recurrent and parallel-convolution branches are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadFusion {
    /// Elementwise sum; head input width is `gru_hidden`.
    Add,
    /// Concatenation; head input width is `2 * gru_hidden`.
    Concat,
}

/// One ConvT block: pointwise expansion followed by two depthwise 1D
/// convolutions, the second of which may downsample the frequency axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvTSpec {
    pub in_channels: usize,
    /// Pointwise expansion factor; expanded channels = round(in * ratio).
    pub expand_ratio: f64,
    /// Depthwise channel multiplier applied by the frequency convolution.
    pub dw_multiplier: usize,
    /// Odd kernel extent along time.
    pub time_kernel: usize,
    /// Odd kernel extent along frequency.
    pub freq_kernel: usize,
    /// 1 keeps the frequency extent, 2 halves it (ceil division).
    pub freq_stride: usize,
}

impl ConvTSpec {
    /// Channels after the pointwise expansion.
    pub fn expanded_channels(&self) -> usize {
        (self.in_channels as f64 * self.expand_ratio).round() as usize
    }

    /// Channels leaving the block.
    pub fn out_channels(&self) -> usize {
        self.expanded_channels() * self.dw_multiplier
    }
}

/// Complete network description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub schema_version: u32,
    pub stem_out_channels: usize,
    pub block_specs: Vec<ConvTSpec>,
    /// Channel-attention bottleneck divisor.
    pub se_reduction: usize,
    pub shuffle_groups: usize,
    pub gru_hidden: usize,
    pub head_fusion: HeadFusion,
    pub n_classes: usize,
    pub input_mels: usize,
    pub input_frames: usize,
}

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Number of ConvT blocks followed by an attention gate (the first two).
pub const SE_BLOCK_SITES: usize = 2;

impl Default for ModelConfig {
    /// The shipped configuration, sized so the 16-bit audit lands close to
    /// 116 KiB of weight memory and ~10.5 MMAC per inference.
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            stem_out_channels: 16,
            block_specs: vec![
                ConvTSpec {
                    in_channels: 16,
                    expand_ratio: 2.5,
                    dw_multiplier: 1,
                    time_kernel: 3,
                    freq_kernel: 3,
                    freq_stride: 2,
                },
                ConvTSpec {
                    in_channels: 40,
                    expand_ratio: 2.0,
                    dw_multiplier: 1,
                    time_kernel: 3,
                    freq_kernel: 3,
                    freq_stride: 2,
                },
            ],
            se_reduction: 4,
            shuffle_groups: 4,
            gru_hidden: 108,
            head_fusion: HeadFusion::Add,
            n_classes: 10,
            input_mels: 256,
            input_frames: 33,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} unsupported, expected {CONFIG_SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if self.stem_out_channels == 0 {
            return Err(Error::Config("stem_out_channels must be >= 1".into()));
        }
        if self.se_reduction == 0 || self.shuffle_groups == 0 {
            return Err(Error::Config("se_reduction and shuffle_groups must be >= 1".into()));
        }
        if self.gru_hidden == 0 {
            return Err(Error::Config("gru_hidden must be >= 1".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("n_classes must be >= 2".into()));
        }
        if self.input_mels < 2 || self.input_frames < 2 {
            return Err(Error::Config(
                "input extents must be >= 2 so the 2x2 pool is defined".into(),
            ));
        }
        if self.stem_out_channels % self.se_reduction != 0 {
            return Err(Error::Config(format!(
                "se_reduction {} must divide stem_out_channels {}",
                self.se_reduction, self.stem_out_channels
            )));
        }
        let mut channels = self.stem_out_channels;
        for (i, spec) in self.block_specs.iter().enumerate() {
            if spec.in_channels != channels {
                return Err(Error::Config(format!(
                    "block {i} expects {} input channels but receives {channels}",
                    spec.in_channels
                )));
            }
            if !(spec.expand_ratio > 0.0) || spec.expanded_channels() == 0 {
                return Err(Error::Config(format!("block {i}: expand_ratio must be positive")));
            }
            if spec.dw_multiplier == 0 {
                return Err(Error::Config(format!("block {i}: dw_multiplier must be >= 1")));
            }
            if spec.time_kernel % 2 == 0 || spec.freq_kernel % 2 == 0 {
                return Err(Error::Config(format!("block {i}: kernels must be odd")));
            }
            if !(spec.freq_stride == 1 || spec.freq_stride == 2) {
                return Err(Error::Config(format!("block {i}: freq_stride must be 1 or 2")));
            }
            if spec.expanded_channels() % self.shuffle_groups != 0 {
                return Err(Error::Config(format!(
                    "block {i}: shuffle_groups {} must divide expanded channels {}",
                    self.shuffle_groups,
                    spec.expanded_channels()
                )));
            }
            if i < SE_BLOCK_SITES && spec.out_channels() % self.se_reduction != 0 {
                return Err(Error::Config(format!(
                    "block {i}: se_reduction {} must divide out channels {}",
                    self.se_reduction,
                    spec.out_channels()
                )));
            }
            channels = spec.out_channels();
        }
        // The frequency axis must survive the stride chain.
        let plan = activation_plan(self)?;
        let _ = plan;
        Ok(())
    }

    /// Channels entering the recurrent stage.
    pub fn gru_steps(&self) -> usize {
        self.block_specs
            .last()
            .map(ConvTSpec::out_channels)
            .unwrap_or(self.stem_out_channels)
    }

    /// Frequency extent entering the recurrent stage.
    pub fn gru_input_size(&self) -> usize {
        let mut f = self.input_mels / 2; // stem pool
        for spec in &self.block_specs {
            f = f.div_ceil(spec.freq_stride);
        }
        f
    }

    /// Head input width under the configured fusion.
    pub fn head_width(&self) -> usize {
        match self.head_fusion {
            HeadFusion::Add => self.gru_hidden,
            HeadFusion::Concat => 2 * self.gru_hidden,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config json: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One named stage of the forward pass with its output shape.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    pub name: String,
    pub out_shape: Vec<usize>,
}

/// The full shape chain the config implies. Both the forward pass and the
/// complexity audit are checked against this plan.
pub fn activation_plan(cfg: &ModelConfig) -> Result<Vec<StagePlan>> {
    let mut stages = Vec::new();
    let (mut f, mut t) = (cfg.input_mels, cfg.input_frames);
    stages.push(StagePlan {
        name: "stem".into(),
        out_shape: vec![cfg.stem_out_channels, f, t],
    });
    if f < 2 || t < 2 {
        return Err(Error::Config(format!("pool input [{f} x {t}] is too small")));
    }
    f /= 2;
    t /= 2;
    stages.push(StagePlan {
        name: "stem_pool".into(),
        out_shape: vec![cfg.stem_out_channels, f, t],
    });
    stages.push(StagePlan {
        name: "stem_se".into(),
        out_shape: vec![cfg.stem_out_channels, f, t],
    });
    for (i, spec) in cfg.block_specs.iter().enumerate() {
        let cp = spec.expanded_channels();
        stages.push(StagePlan {
            name: format!("block{i}.pw"),
            out_shape: vec![cp, f, t],
        });
        stages.push(StagePlan {
            name: format!("block{i}.shuffle"),
            out_shape: vec![cp, f, t],
        });
        stages.push(StagePlan {
            name: format!("block{i}.dw_time"),
            out_shape: vec![cp, f, t],
        });
        f = f.div_ceil(spec.freq_stride);
        if f == 0 {
            return Err(Error::Config(format!("block {i} annihilates the frequency axis")));
        }
        stages.push(StagePlan {
            name: format!("block{i}.dw_freq"),
            out_shape: vec![spec.out_channels(), f, t],
        });
        if i < SE_BLOCK_SITES {
            stages.push(StagePlan {
                name: format!("block{i}.se"),
                out_shape: vec![spec.out_channels(), f, t],
            });
        }
    }
    let steps = cfg.gru_steps();
    stages.push(StagePlan {
        name: "collapse".into(),
        out_shape: vec![steps, f],
    });
    stages.push(StagePlan {
        name: "gru".into(),
        out_shape: vec![steps, cfg.gru_hidden],
    });
    stages.push(StagePlan {
        name: "parallel".into(),
        out_shape: vec![steps, cfg.gru_hidden],
    });
    stages.push(StagePlan {
        name: "fusion".into(),
        out_shape: vec![steps, cfg.head_width()],
    });
    stages.push(StagePlan {
        name: "step_pool".into(),
        out_shape: vec![cfg.head_width()],
    });
    stages.push(StagePlan {
        name: "head".into(),
        out_shape: vec![cfg.n_classes],
    });
    Ok(stages)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.gru_steps(), 80);
        assert_eq!(cfg.gru_input_size(), 32);
        assert_eq!(cfg.head_width(), 108);
    }

    #[test]
    fn plan_shape_chain_for_default() {
        let cfg = ModelConfig::default();
        let plan = activation_plan(&cfg).unwrap();
        let by_name = |n: &str| {
            plan.iter()
                .find(|s| s.name == n)
                .unwrap_or_else(|| panic!("stage {n}"))
                .out_shape
                .clone()
        };
        assert_eq!(by_name("stem"), vec![16, 256, 33]);
        assert_eq!(by_name("stem_pool"), vec![16, 128, 16]);
        assert_eq!(by_name("block0.dw_freq"), vec![40, 64, 16]);
        assert_eq!(by_name("block1.dw_freq"), vec![80, 32, 16]);
        assert_eq!(by_name("collapse"), vec![80, 32]);
        assert_eq!(by_name("gru"), vec![80, 108]);
        assert_eq!(by_name("head"), vec![10]);
    }

    #[test]
    fn chaining_mismatch_is_rejected() {
        let mut cfg = ModelConfig::default();
        cfg.block_specs[1].in_channels = 39;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn divisibility_violations_are_rejected() {
        let mut cfg = ModelConfig::default();
        cfg.shuffle_groups = 7; // does not divide 40
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::default();
        cfg.se_reduction = 3; // does not divide 16
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_round_trip_and_unknown_field_rejection() {
        let cfg = ModelConfig::default();
        let json = cfg.to_json();
        let back = ModelConfig::from_json(&json).unwrap();
        assert_eq!(back, cfg);

        let with_extra = json.replacen('{', "{\n  \"surprise\": 1,", 1);
        assert!(ModelConfig::from_json(&with_extra).is_err());

        let wrong_version = json.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(ModelConfig::from_json(&wrong_version).is_err());
    }

    #[test]
    fn even_kernel_rejected() {
        let mut cfg = ModelConfig::default();
        cfg.block_specs[0].time_kernel = 4;
        assert!(cfg.validate().is_err());
    }
}
