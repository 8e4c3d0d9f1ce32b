//! Reverse-mode gradients of the full network.
//!
//! The pass consumes a [`ForwardTrace`] and walks the stages in reverse,
//! handing each layer's cached inputs to its backward primitive. The result
//! is a gradient store with exactly the same tensor names and shapes as the
//! weight store. Correctness is pinned by central finite differences in the
//! test suites.

use super::loss::cross_entropy_smoothed_with_grad;
use crate::error::Result;
use crate::frontend::FeatureMap;
use crate::model::layers::{
    channel_shuffle_backward, conv2d_same_backward, depthwise_conv1d_freq_backward,
    depthwise_conv1d_time_backward, gru_backward, hybrid_pool_backward,
    parallel_projection_backward, pointwise_conv_backward, relu_backward, se_block_backward,
};
use crate::model::{
    forward_traced, gru_weights, se_weights, ForwardTrace, HeadFusion, ModelConfig,
    SE_BLOCK_SITES, WeightStore,
};
use crate::numerics::Tensor;

/// Gradients for every parameter, given the loss gradient at the logits.
pub fn backward_from_trace(
    cfg: &ModelConfig,
    weights: &WeightStore,
    trace: &ForwardTrace,
    dlogits: &Tensor,
) -> Result<WeightStore> {
    let mut grads = WeightStore::new();
    let steps = trace.collapsed.shape()[0];
    let width = cfg.head_width();
    let h = cfg.gru_hidden;

    // head: logits = head_w . pooled + head_b
    let head_w = weights.get("head.weight")?;
    let mut dhead_w = Tensor::zeros(head_w.shape())?;
    let mut dpooled = vec![0.0; width];
    for k in 0..cfg.n_classes {
        let gk = dlogits.data()[k];
        for i in 0..width {
            dhead_w.data_mut()[k * width + i] = gk * trace.pooled.data()[i];
            dpooled[i] += gk * head_w.data()[k * width + i];
        }
    }
    grads.put("head.weight", dhead_w);
    grads.put("head.bias", dlogits.clone());

    // mean over sequence steps
    let mut dfused = Tensor::zeros(&[steps, width])?;
    for t in 0..steps {
        for i in 0..width {
            dfused.data_mut()[t * width + i] = dpooled[i] / steps as f64;
        }
    }

    // fusion
    let (dgru_out, dparallel) = match cfg.head_fusion {
        HeadFusion::Add => (dfused.clone(), dfused),
        HeadFusion::Concat => {
            let mut dg = Tensor::zeros(&[steps, h])?;
            let mut dp = Tensor::zeros(&[steps, h])?;
            for t in 0..steps {
                dg.data_mut()[t * h..(t + 1) * h]
                    .copy_from_slice(&dfused.data()[t * 2 * h..t * 2 * h + h]);
                dp.data_mut()[t * h..(t + 1) * h]
                    .copy_from_slice(&dfused.data()[t * 2 * h + h..(t + 1) * 2 * h]);
            }
            (dg, dp)
        }
    };

    // parallel branch
    let (dseq_parallel, dconv_w) =
        parallel_projection_backward(&trace.collapsed, weights.get("parallel.weight")?, &dparallel);
    grads.put("parallel.weight", dconv_w);

    // recurrent branch (backprop through time)
    let (dseq_gru, gru_grads) = gru_backward(
        &trace.collapsed,
        &gru_weights(weights)?,
        &trace.gru_cache,
        &dgru_out,
    );
    grads.put("gru.w_z", gru_grads.w_z);
    grads.put("gru.u_z", gru_grads.u_z);
    grads.put("gru.b_z", gru_grads.b_z);
    grads.put("gru.w_r", gru_grads.w_r);
    grads.put("gru.u_r", gru_grads.u_r);
    grads.put("gru.b_r", gru_grads.b_r);
    grads.put("gru.w_h", gru_grads.w_h);
    grads.put("gru.u_h", gru_grads.u_h);
    grads.put("gru.b_h", gru_grads.b_h);

    let dcollapsed = dseq_parallel.add(&dseq_gru)?;

    // undo the mean over time
    let last_out = trace
        .blocks
        .last()
        .map(|b| b.output())
        .unwrap_or(&trace.stem_se_out);
    let (c_ext, f_ext, t_ext) = (last_out.shape()[0], last_out.shape()[1], last_out.shape()[2]);
    let mut g = Tensor::zeros(last_out.shape())?;
    for c in 0..c_ext {
        for f in 0..f_ext {
            let spread = dcollapsed.data()[c * f_ext + f] / t_ext as f64;
            for t in 0..t_ext {
                g.data_mut()[(c * f_ext + f) * t_ext + t] = spread;
            }
        }
    }

    // ConvT blocks in reverse
    for (i, block) in trace.blocks.iter().enumerate().rev() {
        let spec = &cfg.block_specs[i];
        if let Some((_, se_cache)) = &block.se {
            debug_assert!(i < SE_BLOCK_SITES);
            let se_w = se_weights(weights, &format!("block{i}.se"))?;
            let (dx, dw1, db1, dw2, db2) = se_block_backward(&block.dwf_act, &se_w, se_cache, &g);
            grads.put(format!("block{i}.se.w1"), dw1);
            grads.put(format!("block{i}.se.b1"), db1);
            grads.put(format!("block{i}.se.w2"), dw2);
            grads.put(format!("block{i}.se.b2"), db2);
            g = dx;
        }
        g = relu_backward(&block.dwf_pre, &g);
        let (dx, ddwf) = depthwise_conv1d_freq_backward(
            &block.dwt_act,
            weights.get(&format!("block{i}.dw_freq.weight"))?,
            spec.dw_multiplier,
            spec.freq_stride,
            &g,
        );
        grads.put(format!("block{i}.dw_freq.weight"), ddwf);
        g = relu_backward(&block.dwt_pre, &dx);
        let (dx, ddwt) = depthwise_conv1d_time_backward(
            &block.shuffled,
            weights.get(&format!("block{i}.dw_time.weight"))?,
            &g,
        );
        grads.put(format!("block{i}.dw_time.weight"), ddwt);
        g = channel_shuffle_backward(&dx, cfg.shuffle_groups)?;
        g = relu_backward(&block.pw_pre, &g);
        let (dx, dpw, dpb) =
            pointwise_conv_backward(&block.input, weights.get(&format!("block{i}.pw.weight"))?, &g);
        grads.put(format!("block{i}.pw.weight"), dpw);
        grads.put(format!("block{i}.pw.bias"), dpb);
        g = dx;
    }

    // stem attention gate, pool, relu, convolution
    let se_w = se_weights(weights, "stem_se")?;
    let (dx, dw1, db1, dw2, db2) = se_block_backward(&trace.pool_out, &se_w, &trace.stem_se_cache, &g);
    grads.put("stem_se.w1", dw1);
    grads.put("stem_se.b1", db1);
    grads.put("stem_se.w2", dw2);
    grads.put("stem_se.b2", db2);
    let g = hybrid_pool_backward(trace.stem_act.shape(), &trace.pool_argmax, &dx);
    let g = relu_backward(&trace.stem_pre, &g);
    let (_, dstem_w, dstem_b) = conv2d_same_backward(&trace.input, weights.get("stem.weight")?, &g);
    grads.put("stem.weight", dstem_w);
    grads.put("stem.bias", dstem_b);

    Ok(grads)
}

/// Loss and gradients for one labeled feature map.
pub fn backward(
    cfg: &ModelConfig,
    weights: &WeightStore,
    feat: &FeatureMap,
    label: usize,
) -> Result<(f64, WeightStore)> {
    backward_smoothed(cfg, weights, feat, label, 0.0)
}

/// As [`backward`], with label smoothing.
pub fn backward_smoothed(
    cfg: &ModelConfig,
    weights: &WeightStore,
    feat: &FeatureMap,
    label: usize,
    smoothing: f64,
) -> Result<(f64, WeightStore)> {
    let trace = forward_traced(cfg, weights, feat)?;
    let (loss, dlogits) = cross_entropy_smoothed_with_grad(&trace.logits, label, smoothing)?;
    let grads = backward_from_trace(cfg, weights, &trace, &dlogits)?;
    Ok((loss, grads))
}
