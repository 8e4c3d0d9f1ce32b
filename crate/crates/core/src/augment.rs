//! Training-time augmentations: frequency masking, frequency-domain style
//! mixing, and device-impulse-response convolution.
//!
//! Each operation has a deterministic core (`*_rows`, `*_with`, `convolve`)
//! plus a seeded wrapper that draws its parameters from an [`RngStream`].
//! Draw order is fixed: the probability gate first, then the remaining
//! parameters in argument order, so augmented datasets are reproducible from
//! the seed alone.

use crate::error::{Error, Result};
use crate::frontend::{FeatureMap, Waveform};
use crate::rng::RngStream;

/// Hyperparameters for all three augmentations.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    /// Widest frequency mask, in mel bins.
    pub fm_max_width: usize,
    /// Masks drawn per feature.
    pub fm_num_masks: usize,
    /// Probability that masking fires at all.
    pub fm_prob: f64,
    /// Beta-distribution shape for the style-mix coefficient.
    pub fms_alpha: f64,
    /// Probability that a batch is style-mixed.
    pub fms_prob: f64,
    /// Probability that a waveform is convolved with an impulse response.
    pub dir_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            fm_max_width: 64,
            fm_num_masks: 1,
            fm_prob: 1.0,
            fms_alpha: 0.3,
            fms_prob: 0.4,
            dir_prob: 0.6,
        }
    }
}

impl AugmentConfig {
    /// All augmentations off; useful for deterministic training runs.
    pub fn disabled() -> Self {
        Self {
            fm_max_width: 0,
            fm_prob: 0.0,
            fms_prob: 0.0,
            dir_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self, n_mels: usize) -> Result<()> {
        if self.fm_max_width > n_mels {
            return Err(Error::Config(format!(
                "fm_max_width {} exceeds n_mels {n_mels}",
                self.fm_max_width
            )));
        }
        for (name, p) in [
            ("fm_prob", self.fm_prob),
            ("fms_prob", self.fms_prob),
            ("dir_prob", self.dir_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0,1], got {p}")));
            }
        }
        if !(self.fms_alpha > 0.0) {
            return Err(Error::Config("fms_alpha must be positive".into()));
        }
        Ok(())
    }
}

// ============================================================================
// Frequency masking
// ============================================================================

/// Overwrite rows `[start, start + width)` with the feature's global mean.
///
/// The mean (rather than zero) keeps masked regions at a plausible log-energy
/// level. Returns the span for bookkeeping even when the fill value equals
/// the existing content.
pub fn freq_mask_rows(feat: &FeatureMap, start: usize, width: usize) -> Result<FeatureMap> {
    let n_mels = feat.n_mels();
    if start + width > n_mels {
        return Err(Error::Input(format!(
            "mask rows [{start}, {}) exceed {n_mels} mel bins",
            start + width
        )));
    }
    let fill = feat.mean();
    let n_frames = feat.n_frames();
    let mut out = feat.clone();
    for f in start..start + width {
        for t in 0..n_frames {
            out.values_mut().set(&[f, t], fill);
        }
    }
    Ok(out)
}

/// Rows masked by one application, as `(start, width)` pairs.
pub type MaskSpans = Vec<(usize, usize)>;

/// SpecAugment-style frequency masking with seeded draws.
///
/// With probability `fm_prob`, draws `fm_num_masks` masks; each picks a width
/// uniformly from `0..=fm_max_width` and a start uniformly from the legal
/// range, then fills those rows with the global mean.
pub fn freq_mask(
    feat: &FeatureMap,
    rng: &mut RngStream,
    cfg: &AugmentConfig,
) -> Result<(FeatureMap, MaskSpans)> {
    cfg.validate(feat.n_mels())?;
    if !rng.chance(cfg.fm_prob) {
        return Ok((feat.clone(), Vec::new()));
    }
    let n_mels = feat.n_mels();
    let mut out = feat.clone();
    let mut spans = Vec::with_capacity(cfg.fm_num_masks);
    for _ in 0..cfg.fm_num_masks {
        let width = rng.below(cfg.fm_max_width + 1);
        let start = rng.below(n_mels - width + 1);
        if width > 0 {
            out = freq_mask_rows(&out, start, width)?;
        }
        spans.push((start, width));
    }
    Ok((out, spans))
}

// ============================================================================
// Frequency-domain style mixing
// ============================================================================

/// Per-row mean and population standard deviation across time.
fn row_stats(feat: &FeatureMap) -> (Vec<f64>, Vec<f64>) {
    let (n_mels, n_frames) = (feat.n_mels(), feat.n_frames());
    let mut means = vec![0.0; n_mels];
    let mut stds = vec![0.0; n_mels];
    for f in 0..n_mels {
        let row = &feat.values().data()[f * n_frames..(f + 1) * n_frames];
        let mean = row.iter().sum::<f64>() / n_frames as f64;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n_frames as f64;
        means[f] = mean;
        stds[f] = var.sqrt();
    }
    (means, stds)
}

const SIGMA_FLOOR: f64 = 1e-5;

/// Deterministic style mix: exchange per-row statistics between each sample
/// and its partner under `perm`, blended by `lambda`.
///
/// `lambda == 1` and self-partners are exact identities by construction.
pub fn freq_mixstyle_with(
    batch: &[FeatureMap],
    lambda: f64,
    perm: &[usize],
) -> Result<Vec<FeatureMap>> {
    if batch.is_empty() {
        return Err(Error::Input("cannot style-mix an empty batch".into()));
    }
    if perm.len() != batch.len() {
        return Err(Error::Input(format!(
            "permutation length {} does not match batch size {}",
            perm.len(),
            batch.len()
        )));
    }
    let shape = batch[0].values().shape().to_vec();
    for (i, f) in batch.iter().enumerate() {
        if f.values().shape() != shape {
            return Err(Error::Input(format!(
                "batch sample {i} has shape {:?}, expected {shape:?}",
                f.values().shape()
            )));
        }
    }
    if lambda == 1.0 {
        return Ok(batch.to_vec());
    }

    let stats: Vec<(Vec<f64>, Vec<f64>)> = batch.iter().map(row_stats).collect();
    let mut out = Vec::with_capacity(batch.len());
    for (i, feat) in batch.iter().enumerate() {
        let j = perm[i];
        if j >= batch.len() {
            return Err(Error::Input(format!("permutation entry {j} out of range")));
        }
        if j == i {
            out.push(feat.clone());
            continue;
        }
        let (mu_self, sd_self) = &stats[i];
        let (mu_other, sd_other) = &stats[j];
        let (n_mels, n_frames) = (feat.n_mels(), feat.n_frames());
        let mut mixed = feat.clone();
        for f in 0..n_mels {
            let mu = mu_self[f];
            let sd = sd_self[f];
            let mu_mix = lambda * mu + (1.0 - lambda) * mu_other[f];
            let sd_mix = lambda * sd + (1.0 - lambda) * sd_other[f];
            let denom = sd.max(SIGMA_FLOOR);
            for t in 0..n_frames {
                let x = feat.values().get(&[f, t]);
                mixed.values_mut().set(&[f, t], (x - mu) / denom * sd_mix + mu_mix);
            }
        }
        out.push(mixed);
    }
    Ok(out)
}

/// Seeded style mixing over a batch. One probability gate per batch; labels
/// are never touched (style is exchanged, content is not).
pub fn freq_mixstyle(
    batch: &[FeatureMap],
    rng: &mut RngStream,
    cfg: &AugmentConfig,
) -> Result<Vec<FeatureMap>> {
    if batch.is_empty() {
        return Err(Error::Input("cannot style-mix an empty batch".into()));
    }
    cfg.validate(batch[0].n_mels())?;
    if !rng.chance(cfg.fms_prob) {
        return Ok(batch.to_vec());
    }
    let lambda = rng.beta(cfg.fms_alpha, cfg.fms_alpha);
    let perm = rng.permutation(batch.len());
    freq_mixstyle_with(batch, lambda, &perm)
}

// ============================================================================
// Device impulse response
// ============================================================================

/// Linear convolution truncated to the input length, then rescaled so the
/// output peak equals the input peak.
pub fn convolve_truncated(wave: &Waveform, ir: &Waveform) -> Result<Waveform> {
    if wave.sample_rate_hz() != ir.sample_rate_hz() {
        return Err(Error::Config(format!(
            "impulse response rate {} does not match waveform rate {}",
            ir.sample_rate_hz(),
            wave.sample_rate_hz()
        )));
    }
    if ir.samples().iter().all(|&s| s == 0.0) {
        return Err(Error::Input("impulse response is identically zero".into()));
    }
    let x = wave.samples();
    let h = ir.samples();
    let n = x.len();
    let mut y = vec![0.0; n];
    for (k, &hk) in h.iter().enumerate() {
        if hk == 0.0 || k >= n {
            continue;
        }
        for i in k..n {
            y[i] += hk * x[i - k];
        }
    }
    let in_peak = wave.peak();
    let out_peak = y.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    if out_peak > 0.0 && in_peak > 0.0 {
        let g = in_peak / out_peak;
        for v in &mut y {
            *v *= g;
        }
    }
    Waveform::new(y, wave.sample_rate_hz())
}

/// Seeded impulse-response augmentation: with probability `dir_prob`,
/// convolve and re-peak; otherwise return the input unchanged.
pub fn dir_convolve(
    wave: &Waveform,
    ir: &Waveform,
    rng: &mut RngStream,
    cfg: &AugmentConfig,
) -> Result<Waveform> {
    if !(0.0..=1.0).contains(&cfg.dir_prob) {
        return Err(Error::Config(format!("dir_prob must be in [0,1], got {}", cfg.dir_prob)));
    }
    if !rng.chance(cfg.dir_prob) {
        return Ok(wave.clone());
    }
    convolve_truncated(wave, ir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn feat(n_mels: usize, n_frames: usize, f: impl Fn(usize, usize) -> f64) -> FeatureMap {
        let mut t = Tensor::zeros(&[n_mels, n_frames]).unwrap();
        for m in 0..n_mels {
            for fr in 0..n_frames {
                t.set(&[m, fr], f(m, fr));
            }
        }
        FeatureMap::new(t, None).unwrap()
    }

    #[test]
    fn zero_width_mask_is_identity() {
        let x = feat(4, 3, |m, t| (m * 3 + t) as f64);
        let cfg = AugmentConfig {
            fm_max_width: 0,
            ..AugmentConfig::default()
        };
        let mut rng = RngStream::new(1);
        let (y, spans) = freq_mask(&x, &mut rng, &cfg).unwrap();
        assert_eq!(y, x);
        assert!(spans.iter().all(|&(_, w)| w == 0));
    }

    #[test]
    fn disabled_mask_is_identity() {
        let x = feat(4, 3, |m, t| (m + t) as f64);
        let cfg = AugmentConfig {
            fm_prob: 0.0,
            fm_max_width: 2,
            ..AugmentConfig::default()
        };
        let mut rng = RngStream::new(1);
        let (y, spans) = freq_mask(&x, &mut rng, &cfg).unwrap();
        assert_eq!(y, x);
        assert!(spans.is_empty());
    }

    #[test]
    fn constant_input_mask_reports_span_but_preserves_values() {
        let x = feat(4, 3, |_, _| 2.0);
        let y = freq_mask_rows(&x, 1, 2).unwrap();
        assert_eq!(y, x); // mean of a constant map is the constant
    }

    #[test]
    fn mask_changes_at_most_width_rows() {
        let x = feat(16, 5, |m, t| (m * 7 + t) as f64);
        let cfg = AugmentConfig {
            fm_max_width: 4,
            fm_num_masks: 2,
            fm_prob: 1.0,
            ..AugmentConfig::default()
        };
        for seed in 0..20 {
            let mut rng = RngStream::new(seed);
            let (y, _) = freq_mask(&x, &mut rng, &cfg).unwrap();
            let changed = (0..16)
                .filter(|&m| (0..5).any(|t| y.values().get(&[m, t]) != x.values().get(&[m, t])))
                .count();
            assert!(changed <= 8, "seed {seed} changed {changed} rows");
        }
    }

    #[test]
    fn mixstyle_lambda_one_is_exact_identity() {
        let a = feat(3, 4, |m, t| (m as f64) * 1.7 + (t as f64) * 0.3);
        let b = feat(3, 4, |m, t| -(m as f64) + (t as f64) * 2.0);
        let out = freq_mixstyle_with(&[a.clone(), b.clone()], 1.0, &[1, 0]).unwrap();
        assert_eq!(out[0], a);
        assert_eq!(out[1], b);
    }

    #[test]
    fn mixstyle_singleton_batch_is_identity() {
        let a = feat(3, 4, |m, t| (m + t) as f64);
        let mut rng = RngStream::new(7);
        let cfg = AugmentConfig {
            fms_prob: 1.0,
            fm_max_width: 2,
            ..AugmentConfig::default()
        };
        let out = freq_mixstyle(std::slice::from_ref(&a), &mut rng, &cfg).unwrap();
        assert_eq!(out[0], a);
    }

    #[test]
    fn mixstyle_constant_maps_swap_means_at_lambda_zero() {
        let a = feat(2, 3, |_, _| 0.0);
        let b = feat(2, 3, |_, _| 10.0);
        let out = freq_mixstyle_with(&[a, b], 0.0, &[1, 0]).unwrap();
        assert!(out[0].values().data().iter().all(|&v| v == 10.0));
        assert!(out[1].values().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mixstyle_output_row_means_equal_mixed_means() {
        let a = feat(3, 50, |m, t| ((m * 31 + t * 7) as f64 * 0.11).sin());
        let b = feat(3, 50, |m, t| ((m * 13 + t * 5) as f64 * 0.07).cos() * 2.0);
        let lambda = 0.3;
        let out = freq_mixstyle_with(&[a.clone(), b.clone()], lambda, &[1, 0]).unwrap();
        let (mu_a, _) = row_stats(&a);
        let (mu_b, _) = row_stats(&b);
        let (mu_out, _) = row_stats(&out[0]);
        for f in 0..3 {
            let want = lambda * mu_a[f] + (1.0 - lambda) * mu_b[f];
            assert!((mu_out[f] - want).abs() < 1e-9, "row {f}: {} vs {want}", mu_out[f]);
        }
    }

    #[test]
    fn delta_ir_is_identity() {
        let wave = Waveform::new(vec![0.3, -0.5, 0.2, 0.9], 44100).unwrap();
        let ir = Waveform::new(vec![1.0], 44100).unwrap();
        let out = convolve_truncated(&wave, &ir).unwrap();
        assert_eq!(out, wave);
    }

    #[test]
    fn one_sample_delay_and_repeak() {
        let wave = Waveform::new(vec![1.0, 0.0, 0.0], 44100).unwrap();
        let ir = Waveform::new(vec![0.0, 1.0], 44100).unwrap();
        let out = convolve_truncated(&wave, &ir).unwrap();
        assert_eq!(out.samples(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn dir_disabled_is_identity() {
        let wave = Waveform::new(vec![0.1, 0.2], 44100).unwrap();
        let ir = Waveform::new(vec![0.5, 0.5], 44100).unwrap();
        let cfg = AugmentConfig {
            dir_prob: 0.0,
            ..AugmentConfig::default()
        };
        let mut rng = RngStream::new(0);
        assert_eq!(dir_convolve(&wave, &ir, &mut rng, &cfg).unwrap(), wave);
    }

    #[test]
    fn dir_rejects_rate_mismatch_and_zero_ir() {
        let wave = Waveform::new(vec![0.1], 44100).unwrap();
        let wrong_rate = Waveform::new(vec![1.0], 16000).unwrap();
        assert!(matches!(
            convolve_truncated(&wave, &wrong_rate),
            Err(Error::Config(_))
        ));
        let zero_ir = Waveform::new(vec![0.0, 0.0], 44100).unwrap();
        assert!(matches!(
            convolve_truncated(&wave, &zero_ir),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn seeded_runs_are_byte_reproducible() {
        let x = feat(8, 6, |m, t| ((m * 5 + t) as f64 * 0.23).sin());
        let cfg = AugmentConfig {
            fm_max_width: 4,
            ..AugmentConfig::default()
        };
        let run = |seed: u64| {
            let mut rng = RngStream::new(seed);
            let (masked, spans) = freq_mask(&x, &mut rng, &cfg).unwrap();
            let mixed = freq_mixstyle(&[masked, x.clone()], &mut rng, &cfg).unwrap();
            (mixed, spans)
        };
        assert_eq!(run(99), run(99));
        // shapes always preserved
        let (mixed, _) = run(5);
        assert!(mixed.iter().all(|f| f.values().shape() == x.values().shape()));
    }
}
