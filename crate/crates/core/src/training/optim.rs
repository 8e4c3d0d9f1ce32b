//! Adam with bias correction and the warmup-plus-cosine learning schedule.

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{zeros_like, WeightStore};

/// Per-parameter first and second moments plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: WeightStore,
    second: WeightStore,
    step: u64,
}

impl AdamState {
    /// Fresh state with moments shaped like `params`.
    pub fn new(params: &WeightStore) -> Self {
        Self {
            first: zeros_like(params),
            second: zeros_like(params),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update:
/// `m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2;`
/// `w <- w - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)`.
pub fn adam_step(
    params: &mut WeightStore,
    grads: &WeightStore,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.adam_beta1.powi(t);
    let bc2 = 1.0 - cfg.adam_beta2.powi(t);
    for (name, w) in params.iter_mut() {
        let g = grads.get(name)?;
        if g.shape() != w.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                detail: format!("gradient for `{name}` is {:?}, want {:?}", g.shape(), w.shape()),
            });
        }
        let m = state
            .first
            .get_mut(name)
            .expect("state shaped like params")
            .data_mut();
        let v = state
            .second
            .get_mut(name)
            .expect("state shaped like params")
            .data_mut();
        let wd = w.data_mut();
        for i in 0..wd.len() {
            let gi = g.data()[i];
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * gi;
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            wd[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

/// Linear ramp to `lr_max` over `warmup_steps`, then cosine decay to zero at
/// `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, warmup_steps: usize, lr_max: f64) -> Result<f64> {
    if warmup_steps >= total_steps {
        return Err(Error::Config(format!(
            "warmup ({warmup_steps}) must be shorter than the schedule ({total_steps})"
        )));
    }
    if step > total_steps {
        return Err(Error::Config(format!("step {step} beyond total {total_steps}")));
    }
    if !(lr_max > 0.0) {
        return Err(Error::Config("lr_max must be positive".into()));
    }
    if step < warmup_steps {
        return Ok(lr_max * step as f64 / warmup_steps as f64);
    }
    let progress = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    Ok(lr_max * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}
