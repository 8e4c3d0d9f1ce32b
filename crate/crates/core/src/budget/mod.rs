//! Complexity accounting against the 128 KB / 30 MMAC budget, 16-bit weight
//! quantization, and the binary weights format.
//!
//! Counting conventions, pinned because they are easy to disagree on:
//!
//! - One MAC per kernel tap per output element, including taps that land on
//!   zero padding.
//! - Matrix-vector products (attention gates, recurrent gates, projections,
//!   the head) count their full multiply grid.
//! - Pooling, activations, channel shuffling, elementwise gate arithmetic,
//!   and bias additions cost zero MACs.
//! - Memory is parameter storage only: `param_count * bits / 8`. Activation
//!   memory is reported informationally and not gated.

mod f16;
mod store_io;

pub use f16::{
    dequantize, f16_bits_to_f64, quantize_f16, quantize_value, HalfTensor, QuantizedWeightStore,
    F16_MAX,
};
pub use store_io::{
    crc32, quantized_to_bytes, weights_from_bytes, weights_to_bytes_f32, LoadedWeights, Precision,
    HEADER_LEN, WEIGHTS_MAGIC, WEIGHTS_VERSION,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{activation_plan, ModelConfig};

/// Hard memory budget: 128 KB.
pub const MEMORY_LIMIT_BYTES: u64 = 131_072;
/// Hard compute budget: 30 MMAC per inference.
pub const MAC_LIMIT: u64 = 30_000_000;

/// Cost of one stage of the forward pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCost {
    pub name: String,
    pub params: u64,
    pub macs: u64,
    pub output_shape: Vec<usize>,
}

/// Budget verdict for a config at a storage precision.
#[derive(Debug, Clone, Serialize)]
pub struct ComplexityReport {
    pub param_count: u64,
    pub mac_count: u64,
    pub precision_bits: u32,
    pub memory_bytes: u64,
    pub passes_memory: bool,
    pub passes_macs: bool,
    /// Largest single activation tensor at 32-bit inference, informational.
    pub peak_activation_bytes: u64,
    pub per_layer: Vec<LayerCost>,
}

fn block_index(name: &str) -> Option<usize> {
    name.strip_prefix("block")?
        .split('.')
        .next()?
        .parse()
        .ok()
}

/// Per-stage parameter and MAC costs, aligned with [`activation_plan`].
pub fn complexity_breakdown(cfg: &ModelConfig) -> Result<Vec<LayerCost>> {
    cfg.validate()?;
    let plan = activation_plan(cfg)?;
    let input_shape = vec![1usize, cfg.input_mels, cfg.input_frames];
    let r = cfg.se_reduction as u64;
    let h = cfg.gru_hidden as u64;
    let fp = cfg.gru_input_size() as u64;
    let steps = cfg.gru_steps() as u64;

    let mut costs = Vec::with_capacity(plan.len());
    let mut collapse_pos = None;
    for (pos, stage) in plan.iter().enumerate() {
        if stage.name == "collapse" {
            collapse_pos = Some(pos);
        }
        let prev_shape: &[usize] = if pos == 0 {
            &input_shape
        } else if stage.name == "parallel" {
            // reads the collapsed sequence, not the recurrent output
            &plan[collapse_pos.expect("collapse precedes parallel") - 0].out_shape
        } else {
            &plan[pos - 1].out_shape
        };
        let out = &stage.out_shape;
        let (params, macs): (u64, u64) = match stage.name.as_str() {
            "stem" => {
                let c0 = out[0] as u64;
                let (f, t) = (prev_shape[1] as u64, prev_shape[2] as u64);
                (9 * c0 + c0, 9 * c0 * f * t)
            }
            name if name == "stem_se" || name.ends_with(".se") => {
                let c = out[0] as u64;
                (2 * c * c / r + c / r + c, 2 * c * c / r)
            }
            name if name.ends_with(".pw") => {
                let (cin, cout) = (prev_shape[0] as u64, out[0] as u64);
                let (f, t) = (prev_shape[1] as u64, prev_shape[2] as u64);
                (cin * cout + cout, cin * cout * f * t)
            }
            name if name.ends_with(".dw_time") => {
                let i = block_index(name).expect("block stage");
                let k = cfg.block_specs[i].time_kernel as u64;
                let c = out[0] as u64;
                let (f, t) = (out[1] as u64, out[2] as u64);
                (c * k, c * k * f * t)
            }
            name if name.ends_with(".dw_freq") => {
                let i = block_index(name).expect("block stage");
                let k = cfg.block_specs[i].freq_kernel as u64;
                let cout = out[0] as u64; // in_channels * multiplier
                let (f, t) = (out[1] as u64, out[2] as u64);
                (cout * k, cout * k * f * t)
            }
            "gru" => (3 * (fp * h + h * h + h), steps * 3 * (fp * h + h * h)),
            "parallel" => (fp * h, steps * fp * h),
            "head" => {
                let hw = cfg.head_width() as u64;
                let n = cfg.n_classes as u64;
                (hw * n + n, hw * n)
            }
            // pools, shuffle, collapse, fusion: permutations, means, and
            // comparisons only
            _ => (0, 0),
        };
        costs.push(LayerCost {
            name: stage.name.clone(),
            params,
            macs,
            output_shape: out.clone(),
        });
    }
    Ok(costs)
}

/// Total trainable parameters.
pub fn count_params(cfg: &ModelConfig) -> Result<u64> {
    Ok(complexity_breakdown(cfg)?.iter().map(|c| c.params).sum())
}

/// Total multiply-accumulates for one inference.
pub fn count_macs(cfg: &ModelConfig) -> Result<u64> {
    Ok(complexity_breakdown(cfg)?.iter().map(|c| c.macs).sum())
}

/// Bytes of weight storage at the given precision (16 or 32).
pub fn memory_bytes(param_count: u64, precision_bits: u32) -> Result<u64> {
    if precision_bits != 16 && precision_bits != 32 {
        return Err(Error::Config(format!(
            "unsupported precision {precision_bits}, want 16 or 32"
        )));
    }
    Ok(param_count * (precision_bits as u64) / 8)
}

/// Full audit: totals, per-layer breakdown, and pass/fail against the limits.
pub fn audit(cfg: &ModelConfig, precision_bits: u32) -> Result<ComplexityReport> {
    let per_layer = complexity_breakdown(cfg)?;
    let param_count = per_layer.iter().map(|c| c.params).sum();
    let mac_count = per_layer.iter().map(|c| c.macs).sum();
    let memory = memory_bytes(param_count, precision_bits)?;
    let peak_activation_bytes = per_layer
        .iter()
        .map(|c| 4 * c.output_shape.iter().product::<usize>() as u64)
        .max()
        .unwrap_or(0);
    Ok(ComplexityReport {
        param_count,
        mac_count,
        precision_bits,
        memory_bytes: memory,
        passes_memory: memory <= MEMORY_LIMIT_BYTES,
        passes_macs: mac_count <= MAC_LIMIT,
        peak_activation_bytes,
        per_layer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_weights, ConvTSpec, HeadFusion};

    fn cost(report: &[LayerCost], name: &str) -> LayerCost {
        report
            .iter()
            .find(|c| c.name == name)
            .unwrap_or_else(|| panic!("no stage {name}"))
            .clone()
    }

    /// stem 1 channel, one block expanding to 2 channels; mels 8, frames 10.
    fn micro_cfg() -> ModelConfig {
        ModelConfig {
            schema_version: 1,
            stem_out_channels: 1,
            block_specs: vec![ConvTSpec {
                in_channels: 1,
                expand_ratio: 2.0,
                dw_multiplier: 1,
                time_kernel: 3,
                freq_kernel: 3,
                freq_stride: 2,
            }],
            se_reduction: 1,
            shuffle_groups: 1,
            gru_hidden: 2,
            head_fusion: HeadFusion::Add,
            n_classes: 10,
            input_mels: 8,
            input_frames: 11,
        }
    }

    #[test]
    fn depthwise_time_mac_formula() {
        // after pool: [2 x 4 x 5]; dw time: 2 channels * k3 * 4 * 5 = 120
        let report = complexity_breakdown(&micro_cfg()).unwrap();
        let dwt = cost(&report, "block0.dw_time");
        assert_eq!(dwt.macs, 120);
        assert_eq!(dwt.params, 6);
    }

    #[test]
    fn gru_param_formula() {
        // F' = 8/2/2 = 2... widen mels to get F' = 4: mels 16 -> pool 8 -> stride 2 -> 4
        let mut cfg = micro_cfg();
        cfg.input_mels = 16;
        assert_eq!(cfg.gru_input_size(), 4);
        let report = complexity_breakdown(&cfg).unwrap();
        assert_eq!(cost(&report, "gru").params, 3 * (4 * 2 + 2 * 2 + 2)); // 42
    }

    #[test]
    fn pointwise_formulas() {
        // pw 4 -> 8 over a [16 x 8] grid: params 40, macs 4096
        let cfg = ModelConfig {
            schema_version: 1,
            stem_out_channels: 4,
            block_specs: vec![ConvTSpec {
                in_channels: 4,
                expand_ratio: 2.0,
                dw_multiplier: 1,
                time_kernel: 3,
                freq_kernel: 3,
                freq_stride: 2,
            }],
            se_reduction: 2,
            shuffle_groups: 2,
            gru_hidden: 3,
            head_fusion: HeadFusion::Add,
            n_classes: 10,
            input_mels: 32,
            input_frames: 17,
        };
        let report = complexity_breakdown(&cfg).unwrap();
        let pw = cost(&report, "block0.pw");
        assert_eq!(pw.params, 40);
        assert_eq!(pw.macs, 4 * 8 * 16 * 8);
    }

    #[test]
    fn params_match_initializer_allocation() {
        for cfg in [
            ModelConfig::default(),
            micro_cfg(),
            {
                let mut c = micro_cfg();
                c.head_fusion = HeadFusion::Concat;
                c.block_specs[0].dw_multiplier = 3;
                c.gru_hidden = 5;
                c
            },
        ] {
            let total = count_params(&cfg).unwrap();
            let allocated = init_weights(&cfg, 0).unwrap().element_count() as u64;
            assert_eq!(total, allocated, "config {cfg:?}");
        }
    }

    #[test]
    fn memory_arithmetic() {
        assert_eq!(memory_bytes(58470, 16).unwrap(), 116_940);
        assert_eq!(memory_bytes(0, 16).unwrap(), 0);
        assert_eq!(memory_bytes(65536, 16).unwrap(), MEMORY_LIMIT_BYTES);
        assert_eq!(memory_bytes(1000, 32).unwrap(), 4000);
        assert!(memory_bytes(1, 8).is_err());
    }

    #[test]
    fn default_config_budget_snapshot() {
        let cfg = ModelConfig::default();
        let report = audit(&cfg, 16).unwrap();
        assert_eq!(report.param_count, 59_368);
        assert_eq!(report.memory_bytes, 118_736);
        assert_eq!(report.mac_count, 10_451_800);
        assert!(report.passes_memory);
        assert!(report.passes_macs);
        assert!(report.param_count < 65_536);
        // inside the target envelope
        assert!(report.memory_bytes >= 100 * 1024 && report.memory_bytes <= 128 * 1024);
        assert!(report.mac_count >= 8_000_000 && report.mac_count <= 13_000_000);
    }

    #[test]
    fn totals_equal_breakdown_sums() {
        let report = audit(&ModelConfig::default(), 16).unwrap();
        assert_eq!(
            report.param_count,
            report.per_layer.iter().map(|c| c.params).sum::<u64>()
        );
        assert_eq!(
            report.mac_count,
            report.per_layer.iter().map(|c| c.macs).sum::<u64>()
        );
    }

    #[test]
    fn oversized_config_fails_memory() {
        let cfg = ModelConfig {
            schema_version: 1,
            stem_out_channels: 512,
            block_specs: vec![],
            se_reduction: 4,
            shuffle_groups: 1,
            gru_hidden: 108,
            head_fusion: HeadFusion::Add,
            n_classes: 10,
            input_mels: 256,
            input_frames: 33,
        };
        let report = audit(&cfg, 16).unwrap();
        assert!(!report.passes_memory);
    }

    #[test]
    fn report_serializes_to_json() {
        let report = audit(&ModelConfig::default(), 16).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"param_count\":59368"));
        assert!(json.contains("\"passes_memory\":true"));
    }
}
