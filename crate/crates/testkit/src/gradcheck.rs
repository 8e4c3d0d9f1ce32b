//! Central-finite-difference oracle for the analytic gradients, with kink
//! detection: a mismatch is only excused when the relu sign pattern or the
//! pool routing provably changes inside the probe window, since central
//! differences are not a valid derivative oracle across a kink.

use asc_core::frontend::FeatureMap;
use asc_core::model::{forward, forward_traced, ModelConfig, WeightStore};
use asc_core::training::{backward, cross_entropy};

/// Sign pattern of every relu pre-activation plus the pool argmax routing.
pub fn kink_signature(cfg: &ModelConfig, weights: &WeightStore, feat: &FeatureMap) -> Vec<u8> {
    let trace = forward_traced(cfg, weights, feat).unwrap();
    let mut sig = Vec::new();
    let mut push = |t: &[f64]| sig.extend(t.iter().map(|&v| (v > 0.0) as u8));
    push(trace.stem_pre.data());
    push(&trace.stem_se_cache.pre1);
    for block in &trace.blocks {
        push(block.pw_pre.data());
        push(block.dwt_pre.data());
        push(block.dwf_pre.data());
        if let Some((_, cache)) = &block.se {
            push(&cache.pre1);
        }
    }
    sig.extend(trace.pool_argmax.iter().map(|&i| (i % 251) as u8));
    sig
}

/// Outcome of a full-parameter sweep.
pub struct SweepReport {
    /// Largest `|analytic - numeric| / (1e-8 + 1e-4 max(|analytic|, |numeric|))`
    /// among differentiable coordinates; values <= 1 are within tolerance.
    pub worst_ratio: f64,
    pub worst_at: String,
    pub kink_skipped: usize,
    pub total: usize,
}

/// Check every coordinate of every parameter against central differences.
pub fn sweep_all_parameters(
    cfg: &ModelConfig,
    weights: &WeightStore,
    feat: &FeatureMap,
    label: usize,
    eps: f64,
) -> SweepReport {
    let loss_of = |store: &WeightStore| -> f64 {
        cross_entropy(&forward(cfg, store, feat).unwrap(), label).unwrap()
    };
    let (_, grads) = backward(cfg, weights, feat, label).unwrap();

    let mut report = SweepReport {
        worst_ratio: 0.0,
        worst_at: String::new(),
        kink_skipped: 0,
        total: 0,
    };
    let names: Vec<String> = weights.iter().map(|(n, _)| n.clone()).collect();
    for name in names {
        let count = weights.get(&name).unwrap().len();
        for idx in 0..count {
            report.total += 1;
            let mut probe = weights.clone();
            let original = probe.get(&name).unwrap().data()[idx];
            probe.get_mut(&name).unwrap().data_mut()[idx] = original + eps;
            let plus = loss_of(&probe);
            probe.get_mut(&name).unwrap().data_mut()[idx] = original - eps;
            let minus = loss_of(&probe);
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads.get(&name).unwrap().data()[idx];
            let err = (analytic - numeric).abs();
            let tol = 1e-8 + 1e-4 * analytic.abs().max(numeric.abs());
            if err > tol {
                let sig_minus = kink_signature(cfg, &probe, feat);
                probe.get_mut(&name).unwrap().data_mut()[idx] = original + eps;
                let sig_plus = kink_signature(cfg, &probe, feat);
                if sig_plus != sig_minus {
                    report.kink_skipped += 1;
                    continue;
                }
            }
            let ratio = err / tol;
            if ratio > report.worst_ratio {
                report.worst_ratio = ratio;
                report.worst_at =
                    format!("{name}[{idx}]: analytic {analytic:e}, numeric {numeric:e}");
            }
        }
    }
    report
}
