//! Supervised training: cross-entropy, analytic backpropagation, Adam, the
//! warmup-plus-cosine schedule, and the epoch loop.
//!
//! The loop is single-threaded and bit-deterministic for a given seed. Draw
//! order per epoch is fixed: the shuffle permutation first, then per sample
//! the impulse-response gate and pick, then mask draws, then one style-mix
//! draw per batch.

mod backward;
mod loss;
mod manifest;
mod optim;

pub use backward::{backward, backward_from_trace, backward_smoothed};
pub use loss::{cross_entropy, cross_entropy_smoothed_with_grad, cross_entropy_with_grad};
pub use manifest::{label_index, DatasetManifest, ManifestRow, SCENE_LABELS};
pub use optim::{adam_step, lr_at, AdamState};

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::augment::{convolve_truncated, freq_mask, freq_mixstyle, AugmentConfig};
use crate::error::{Error, Result};
use crate::frontend::{decode_wav, log_mel, FeatureMap, FrontendConfig, Waveform};
use crate::model::{forward_traced, init_weights, ModelConfig, WeightStore};
use crate::numerics::argmax;
use crate::rng::RngStream;

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub warmup_epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Label smoothing in `[0, 0.2]`; 0 is plain cross-entropy.
    pub label_smoothing: f64,
    /// When set, the schedule advances per optimizer step instead of per epoch.
    pub per_step_lr: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 256,
            lr_max: 1e-3,
            warmup_epochs: 10,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            label_smoothing: 0.0,
            per_step_lr: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs > 0 && self.warmup_epochs >= self.epochs {
            return Err(Error::Config(format!(
                "warmup_epochs {} must be less than epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(0.0..=0.2).contains(&self.label_smoothing) {
            return Err(Error::Config("label_smoothing must be in [0, 0.2]".into()));
        }
        if !(self.lr_max > 0.0) {
            return Err(Error::Config("lr_max must be positive".into()));
        }
        Ok(())
    }
}

/// One line of training history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean loss over the full training set with post-epoch weights.
    pub loss: f64,
    /// Accuracy over the full training set with post-epoch weights.
    pub acc: f64,
}

/// Trained weights plus per-epoch history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: WeightStore,
    pub history: Vec<EpochRecord>,
}

/// History as JSON lines, one record per epoch.
pub fn history_to_jsonl(history: &[EpochRecord]) -> String {
    let mut out = String::new();
    for record in history {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

struct Sample {
    wave: Waveform,
    label: usize,
    /// Clean feature, reused whenever the waveform is not re-convolved.
    feature: FeatureMap,
}

/// Load and sort impulse responses from a directory of WAV files, by name.
pub fn load_impulse_responses(dir: &Path) -> Result<Vec<Waveform>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("wav"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    let mut irs = Vec::with_capacity(paths.len());
    for path in paths {
        let bytes = std::fs::read(&path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        let wave = decode_wav(&bytes)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        irs.push(wave);
    }
    Ok(irs)
}

/// Train on the manifest's audio. Deterministic for a given seed: history
/// and final weights are bit-identical across runs.
pub fn train(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    frontend_cfg: &FrontendConfig,
    augment_cfg: &AugmentConfig,
    manifest: &DatasetManifest,
    audio_root: &Path,
    impulse_responses: &[Waveform],
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    frontend_cfg.validate()?;
    augment_cfg.validate(frontend_cfg.n_mels)?;
    if manifest.is_empty() {
        return Err(Error::Input("manifest has no rows".into()));
    }

    // Decode audio and compute clean features up front; augmented features
    // are recomputed per draw.
    let mut samples = Vec::with_capacity(manifest.len());
    for row in manifest.rows() {
        let path = audio_root.join(&row.path);
        let bytes =
            std::fs::read(&path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        let wave = decode_wav(&bytes)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        let feature = log_mel(&wave, frontend_cfg)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        samples.push(Sample {
            wave,
            label: row.label,
            feature,
        });
    }

    let mut weights = init_weights(model_cfg, train_cfg.seed)?;
    let mut adam = AdamState::new(&weights);
    let mut rng = RngStream::new(train_cfg.seed);
    let mut history = Vec::with_capacity(train_cfg.epochs);

    let n = samples.len();
    let steps_per_epoch = n.div_ceil(train_cfg.batch_size);
    let dir_enabled = augment_cfg.dir_prob > 0.0 && !impulse_responses.is_empty();

    for epoch in 0..train_cfg.epochs {
        let lr_epoch = lr_at(
            epoch,
            train_cfg.epochs,
            train_cfg.warmup_epochs,
            train_cfg.lr_max,
        )?;
        let order = rng.permutation(n);

        for (step, chunk) in order.chunks(train_cfg.batch_size).enumerate() {
            let lr = if train_cfg.per_step_lr {
                lr_at(
                    epoch * steps_per_epoch + step,
                    train_cfg.epochs * steps_per_epoch,
                    train_cfg.warmup_epochs * steps_per_epoch,
                    train_cfg.lr_max,
                )?
            } else {
                lr_epoch
            };

            // assemble the augmented batch
            let mut feats = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let sample = &samples[idx];
                let feature = if dir_enabled && rng.chance(augment_cfg.dir_prob) {
                    let ir = &impulse_responses[rng.below(impulse_responses.len())];
                    let convolved = convolve_truncated(&sample.wave, ir)?;
                    log_mel(&convolved, frontend_cfg)?
                } else {
                    sample.feature.clone()
                };
                let (masked, _) = freq_mask(&feature, &mut rng, augment_cfg)?;
                feats.push(masked);
                labels.push(sample.label);
            }
            let feats = freq_mixstyle(&feats, &mut rng, augment_cfg)?;

            // accumulate mean gradients over the batch
            let mut grad_acc: Option<WeightStore> = None;
            for (feat, &label) in feats.iter().zip(&labels) {
                let trace = forward_traced(model_cfg, &weights, feat)?;
                let (loss, dlogits) = cross_entropy_smoothed_with_grad(
                    &trace.logits,
                    label,
                    train_cfg.label_smoothing,
                )?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, step });
                }
                let grads = backward_from_trace(model_cfg, &weights, &trace, &dlogits)?;
                grad_acc = Some(match grad_acc {
                    None => grads,
                    Some(mut acc) => {
                        for (name, g) in grads.iter() {
                            let slot = acc.get_mut(name).expect("same parameter set");
                            for (a, &b) in slot.data_mut().iter_mut().zip(g.data()) {
                                *a += b;
                            }
                        }
                        acc
                    }
                });
            }
            let mut grads = grad_acc.expect("non-empty batch");
            let scale = 1.0 / chunk.len() as f64;
            for (_, g) in grads.iter_mut() {
                for v in g.data_mut() {
                    *v *= scale;
                }
            }
            adam_step(&mut weights, &grads, &mut adam, lr, train_cfg)?;
        }

        // evaluation pass on clean features with post-epoch weights
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for sample in &samples {
            let trace = forward_traced(model_cfg, &weights, &sample.feature)?;
            let loss = cross_entropy(&trace.logits, sample.label)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: usize::MAX,
                });
            }
            loss_sum += loss;
            if argmax(trace.logits.data()) == sample.label {
                correct += 1;
            }
        }
        history.push(EpochRecord {
            epoch,
            lr: lr_epoch,
            loss: loss_sum / n as f64,
            acc: correct as f64 / n as f64,
        });
    }

    Ok(TrainOutcome { weights, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        cfg.validate().unwrap();
        cfg.warmup_epochs = 150;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.label_smoothing = 0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn history_serializes_one_line_per_epoch() {
        let history = vec![
            EpochRecord { epoch: 0, lr: 0.0, loss: 2.3, acc: 0.1 },
            EpochRecord { epoch: 1, lr: 1e-4, loss: 2.2, acc: 0.2 },
        ];
        let text = history_to_jsonl(&history);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("{\"epoch\":0,"));
        assert!(lines[1].contains("\"lr\":0.0001"));
    }
}
