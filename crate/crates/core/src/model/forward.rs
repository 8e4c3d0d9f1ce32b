//! Full forward pass, with cached intermediates for the reverse pass.

use super::config::{ConvTSpec, ModelConfig, HeadFusion, SE_BLOCK_SITES};
use super::layers::{
    channel_shuffle, conv2d_same, depthwise_conv1d_freq, depthwise_conv1d_time, gru_over_frequency,
    hybrid_pool, parallel_projection, pointwise_conv, relu_forward, se_block, GruCache, GruWeights,
    SeCache, SeWeights,
};
use super::weights::{validate_weights, WeightStore};
use crate::error::{Error, Result};
use crate::frontend::FeatureMap;
use crate::numerics::Tensor;

/// Borrow the four attention-gate tensors under `prefix`.
pub fn se_weights<'a>(store: &'a WeightStore, prefix: &str) -> Result<SeWeights<'a>> {
    Ok(SeWeights {
        w1: store.get(&format!("{prefix}.w1"))?,
        b1: store.get(&format!("{prefix}.b1"))?,
        w2: store.get(&format!("{prefix}.w2"))?,
        b2: store.get(&format!("{prefix}.b2"))?,
    })
}

/// Borrow the nine recurrent-gate tensors.
pub fn gru_weights(store: &WeightStore) -> Result<GruWeights<'_>> {
    Ok(GruWeights {
        w_z: store.get("gru.w_z")?,
        u_z: store.get("gru.u_z")?,
        b_z: store.get("gru.b_z")?,
        w_r: store.get("gru.w_r")?,
        u_r: store.get("gru.u_r")?,
        b_r: store.get("gru.b_r")?,
        w_h: store.get("gru.w_h")?,
        u_h: store.get("gru.u_h")?,
        b_h: store.get("gru.b_h")?,
    })
}

/// Intermediates of one ConvT block.
#[derive(Debug, Clone)]
pub struct BlockTrace {
    pub input: Tensor,
    pub pw_pre: Tensor,
    pub pw_act: Tensor,
    pub shuffled: Tensor,
    pub dwt_pre: Tensor,
    pub dwt_act: Tensor,
    pub dwf_pre: Tensor,
    pub dwf_act: Tensor,
    /// Present on the first two blocks: gated output plus gate cache.
    pub se: Option<(Tensor, SeCache)>,
}

impl BlockTrace {
    pub fn output(&self) -> &Tensor {
        match &self.se {
            Some((out, _)) => out,
            None => &self.dwf_act,
        }
    }
}

/// ConvT block with intermediates: pointwise expansion, relu, channel
/// shuffle, depthwise time convolution, relu, depthwise frequency
/// convolution (stride, multiplier), relu.
pub fn convt_block_traced(
    x: &Tensor,
    spec: &ConvTSpec,
    shuffle_groups: usize,
    pw_w: &Tensor,
    pw_b: &Tensor,
    dwt_w: &Tensor,
    dwf_w: &Tensor,
) -> Result<BlockTrace> {
    if x.shape()[0] != spec.in_channels {
        return Err(Error::ShapeMismatch {
            op: "convt_block",
            detail: format!("input has {} channels, spec says {}", x.shape()[0], spec.in_channels),
        });
    }
    let pw_pre = pointwise_conv(x, pw_w, Some(pw_b))?;
    let pw_act = relu_forward(&pw_pre);
    let shuffled = channel_shuffle(&pw_act, shuffle_groups)?;
    let dwt_pre = depthwise_conv1d_time(&shuffled, dwt_w)?;
    let dwt_act = relu_forward(&dwt_pre);
    let dwf_pre = depthwise_conv1d_freq(&dwt_act, dwf_w, spec.dw_multiplier, spec.freq_stride)?;
    let dwf_act = relu_forward(&dwf_pre);
    Ok(BlockTrace {
        input: x.clone(),
        pw_pre,
        pw_act,
        shuffled,
        dwt_pre,
        dwt_act,
        dwf_pre,
        dwf_act,
        se: None,
    })
}

/// ConvT block output only.
pub fn convt_block(
    x: &Tensor,
    spec: &ConvTSpec,
    shuffle_groups: usize,
    pw_w: &Tensor,
    pw_b: &Tensor,
    dwt_w: &Tensor,
    dwf_w: &Tensor,
) -> Result<Tensor> {
    Ok(convt_block_traced(x, spec, shuffle_groups, pw_w, pw_b, dwt_w, dwf_w)?.dwf_act)
}

/// Everything the reverse pass needs, stage by stage.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Tensor,
    pub stem_pre: Tensor,
    pub stem_act: Tensor,
    pub pool_out: Tensor,
    pub pool_argmax: Vec<usize>,
    pub stem_se_out: Tensor,
    pub stem_se_cache: SeCache,
    pub blocks: Vec<BlockTrace>,
    /// Mean over time of the last block output: `[channels, freq]`.
    pub collapsed: Tensor,
    pub gru_out: Tensor,
    pub gru_cache: GruCache,
    pub parallel_out: Tensor,
    pub fused: Tensor,
    pub pooled: Tensor,
    pub logits: Tensor,
}

impl ForwardTrace {
    /// Named output shape of every stage, in plan order.
    pub fn stage_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = vec![
            ("stem".to_string(), self.stem_act.shape().to_vec()),
            ("stem_pool".to_string(), self.pool_out.shape().to_vec()),
            ("stem_se".to_string(), self.stem_se_out.shape().to_vec()),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.pw"), b.pw_act.shape().to_vec()));
            out.push((format!("block{i}.shuffle"), b.shuffled.shape().to_vec()));
            out.push((format!("block{i}.dw_time"), b.dwt_act.shape().to_vec()));
            out.push((format!("block{i}.dw_freq"), b.dwf_act.shape().to_vec()));
            if let Some((se_out, _)) = &b.se {
                out.push((format!("block{i}.se"), se_out.shape().to_vec()));
            }
        }
        out.push(("collapse".to_string(), self.collapsed.shape().to_vec()));
        out.push(("gru".to_string(), self.gru_out.shape().to_vec()));
        out.push(("parallel".to_string(), self.parallel_out.shape().to_vec()));
        out.push(("fusion".to_string(), self.fused.shape().to_vec()));
        out.push(("step_pool".to_string(), self.pooled.shape().to_vec()));
        out.push(("head".to_string(), self.logits.shape().to_vec()));
        out
    }
}

/// Standardize a feature map to zero mean and unit variance before the stem.
///
/// Log-mel features carry a large negative offset (silence sits at the log
/// floor); feeding them raw starves the relu chain. The feature file format
/// stays untouched - this is the first step of the network, not of the
/// front-end. Parameter-free, and elementwise scaling costs zero MACs under
/// the counting convention.
pub fn standardize_input(x: &Tensor) -> Tensor {
    let n = x.len() as f64;
    let mean = x.data().iter().sum::<f64>() / n;
    let var = x.data().iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = var.sqrt().max(1e-6);
    x.map(|v| (v - mean) / denom)
}

/// Mean over the time axis: `[C, F, T] -> [C, F]`.
pub fn collapse_time(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(Error::ShapeMismatch {
            op: "collapse_time",
            detail: format!("expected [C, F, T], got {:?}", x.shape()),
        });
    }
    let (c_ext, f_ext, t_ext) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = Tensor::zeros(&[c_ext, f_ext])?;
    for c in 0..c_ext {
        for f in 0..f_ext {
            let base = (c * f_ext + f) * t_ext;
            out.data_mut()[c * f_ext + f] =
                x.data()[base..base + t_ext].iter().sum::<f64>() / t_ext as f64;
        }
    }
    Ok(out)
}

/// Forward pass returning the full trace.
pub fn forward_traced(
    cfg: &ModelConfig,
    weights: &WeightStore,
    feat: &FeatureMap,
) -> Result<ForwardTrace> {
    validate_weights(cfg, weights)?;
    if feat.n_mels() != cfg.input_mels || feat.n_frames() != cfg.input_frames {
        return Err(Error::Input(format!(
            "feature is [{} x {}], model expects [{} x {}]",
            feat.n_mels(),
            feat.n_frames(),
            cfg.input_mels,
            cfg.input_frames
        )));
    }
    let input =
        standardize_input(&feat.values().reshaped(&[1, cfg.input_mels, cfg.input_frames])?);

    let stem_pre = conv2d_same(&input, weights.get("stem.weight")?, weights.get("stem.bias")?)?;
    let stem_act = relu_forward(&stem_pre);
    let (pool_out, pool_argmax) = hybrid_pool(&stem_act)?;
    let (stem_se_out, stem_se_cache) = se_block(&pool_out, &se_weights(weights, "stem_se")?)?;

    let mut blocks = Vec::with_capacity(cfg.block_specs.len());
    let mut x = stem_se_out.clone();
    for (i, spec) in cfg.block_specs.iter().enumerate() {
        let mut trace = convt_block_traced(
            &x,
            spec,
            cfg.shuffle_groups,
            weights.get(&format!("block{i}.pw.weight"))?,
            weights.get(&format!("block{i}.pw.bias"))?,
            weights.get(&format!("block{i}.dw_time.weight"))?,
            weights.get(&format!("block{i}.dw_freq.weight"))?,
        )?;
        if i < SE_BLOCK_SITES {
            let se = se_weights(weights, &format!("block{i}.se"))?;
            trace.se = Some(se_block(&trace.dwf_act, &se)?);
        }
        x = trace.output().clone();
        blocks.push(trace);
    }

    let collapsed = collapse_time(&x)?;
    let (gru_out, gru_cache) = gru_over_frequency(&collapsed, &gru_weights(weights)?)?;
    let parallel_out = parallel_projection(&collapsed, weights.get("parallel.weight")?)?;

    let steps = collapsed.shape()[0];
    let h = cfg.gru_hidden;
    let fused = match cfg.head_fusion {
        HeadFusion::Add => gru_out.add(&parallel_out)?,
        HeadFusion::Concat => {
            let mut out = Tensor::zeros(&[steps, 2 * h])?;
            for t in 0..steps {
                out.data_mut()[t * 2 * h..t * 2 * h + h]
                    .copy_from_slice(&gru_out.data()[t * h..(t + 1) * h]);
                out.data_mut()[t * 2 * h + h..(t + 1) * 2 * h]
                    .copy_from_slice(&parallel_out.data()[t * h..(t + 1) * h]);
            }
            out
        }
    };

    let width = cfg.head_width();
    let mut pooled = Tensor::zeros(&[width])?;
    for t in 0..steps {
        for i in 0..width {
            pooled.data_mut()[i] += fused.data()[t * width + i];
        }
    }
    for v in pooled.data_mut() {
        *v /= steps as f64;
    }

    let head_w = weights.get("head.weight")?;
    let head_b = weights.get("head.bias")?;
    let mut logits = Tensor::zeros(&[cfg.n_classes])?;
    for k in 0..cfg.n_classes {
        let row = &head_w.data()[k * width..(k + 1) * width];
        logits.data_mut()[k] =
            head_b.data()[k] + row.iter().zip(pooled.data()).map(|(&a, &b)| a * b).sum::<f64>();
    }

    Ok(ForwardTrace {
        input,
        stem_pre,
        stem_act,
        pool_out,
        pool_argmax,
        stem_se_out,
        stem_se_cache,
        blocks,
        collapsed,
        gru_out,
        gru_cache,
        parallel_out,
        fused,
        pooled,
        logits,
    })
}

/// Forward pass yielding logits only. Softmax is applied by callers that
/// want probabilities.
pub fn forward(cfg: &ModelConfig, weights: &WeightStore, feat: &FeatureMap) -> Result<Tensor> {
    Ok(forward_traced(cfg, weights, feat)?.logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::activation_plan;
    use crate::model::weights::{init_weights, parameter_specs, zeros_like};
    use crate::numerics::softmax;

    /// Small but structurally complete config for fast tests.
    pub(crate) fn tiny_config() -> ModelConfig {
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

    fn feature(cfg: &ModelConfig, fill: impl Fn(usize, usize) -> f64) -> FeatureMap {
        let mut t = Tensor::zeros(&[cfg.input_mels, cfg.input_frames]).unwrap();
        for m in 0..cfg.input_mels {
            for fr in 0..cfg.input_frames {
                t.set(&[m, fr], fill(m, fr));
            }
        }
        FeatureMap::new(t, None).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let cfg = tiny_config();
        let weights = zeros_like(&init_weights(&cfg, 0).unwrap());
        let feat = feature(&cfg, |m, t| ((m * 5 + t) as f64 * 0.17).sin());
        let logits = forward(&cfg, &weights, &feat).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
        let probs = softmax(&logits).unwrap();
        for &p in probs.data() {
            assert!((p - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_is_deterministic_and_shaped() {
        let cfg = tiny_config();
        let weights = init_weights(&cfg, 3).unwrap();
        let feat = feature(&cfg, |m, t| ((m + t) as f64 * 0.29).cos());
        let a = forward(&cfg, &weights, &feat).unwrap();
        let b = forward(&cfg, &weights, &feat).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), &[10]);
    }

    #[test]
    fn trace_shapes_match_activation_plan() {
        let cfg = tiny_config();
        let weights = init_weights(&cfg, 1).unwrap();
        let feat = feature(&cfg, |m, t| ((m * 3 + t) as f64 * 0.11).sin());
        let trace = forward_traced(&cfg, &weights, &feat).unwrap();
        let plan = activation_plan(&cfg).unwrap();
        let got = trace.stage_shapes();
        assert_eq!(got.len(), plan.len());
        for (stage, shapes) in plan.iter().zip(&got) {
            assert_eq!(stage.name, shapes.0);
            assert_eq!(stage.out_shape, shapes.1, "stage {}", stage.name);
        }
    }

    #[test]
    fn feature_shape_mismatch_is_input_error() {
        let cfg = tiny_config();
        let weights = init_weights(&cfg, 0).unwrap();
        let feat = FeatureMap::new(Tensor::zeros(&[9, 5]).unwrap(), None).unwrap();
        assert!(matches!(
            forward(&cfg, &weights, &feat),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn missing_weight_is_named() {
        let cfg = tiny_config();
        let mut weights = init_weights(&cfg, 0).unwrap();
        let specs = parameter_specs(&cfg).unwrap();
        // rebuild without the head bias
        let mut broken = WeightStore::new();
        for spec in &specs {
            if spec.name != "head.bias" {
                broken.put(spec.name.clone(), weights.get(&spec.name).unwrap().clone());
            }
        }
        weights = broken;
        let feat = feature(&cfg, |_, _| 0.0);
        match forward(&cfg, &weights, &feat) {
            Err(Error::WeightMismatch { name, .. }) => assert_eq!(name, "head.bias"),
            other => panic!("expected WeightMismatch, got {other:?}"),
        }
    }

    #[test]
    fn identity_block_is_relu() {
        // expand 1, multiplier 1, stride 1, identity pointwise, delta kernels
        let spec = ConvTSpec {
            in_channels: 3,
            expand_ratio: 1.0,
            dw_multiplier: 1,
            time_kernel: 3,
            freq_kernel: 3,
            freq_stride: 1,
        };
        let mut x = Tensor::zeros(&[3, 4, 4]).unwrap();
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = ((i as f64) * 0.7).sin(); // mixed signs
        }
        let mut pw = Tensor::zeros(&[3, 3]).unwrap();
        for c in 0..3 {
            pw.set(&[c, c], 1.0);
        }
        let pw_b = Tensor::zeros(&[3]).unwrap();
        let delta = Tensor::from_vec(
            &[3, 3],
            vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0],
        )
        .unwrap();
        let y = convt_block(&x, &spec, 1, &pw, &pw_b, &delta, &delta).unwrap();
        assert_eq!(y, relu_forward(&x));

        // zero weights annihilate
        let z = Tensor::zeros(&[3, 3]).unwrap();
        let zk = Tensor::zeros(&[3, 3]).unwrap();
        let y = convt_block(&x, &spec, 1, &z, &pw_b, &zk, &zk).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stride_halves_frequency_extent() {
        let cfg = tiny_config();
        let weights = init_weights(&cfg, 5).unwrap();
        let feat = feature(&cfg, |m, t| (m + t) as f64 * 0.01);
        let trace = forward_traced(&cfg, &weights, &feat).unwrap();
        // 8 mels -> pool 4 -> block0 stride 2 -> 2 -> block1 stride 2 -> 1
        assert_eq!(trace.blocks[0].dwf_act.shape()[1], 2);
        assert_eq!(trace.blocks[1].dwf_act.shape()[1], 1);
        assert_eq!(trace.collapsed.shape(), &[12, 1]);
    }
}
