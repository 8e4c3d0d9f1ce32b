//! Subcommand implementations: thin wrappers over the library operations.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use asc_core::augment::{dir_convolve, freq_mask, freq_mixstyle, AugmentConfig};
use asc_core::budget;
use asc_core::error::{Error, Result};
use asc_core::frontend::{
    class_average, decode_wav, encode_wav_16bit, feature_from_bytes, feature_to_bytes, log_mel,
    FeatureMap, FrontendConfig,
};
use asc_core::model::{forward, ModelConfig, WeightStore};
use asc_core::numerics::{argmax, softmax};
use asc_core::rng::{RngStream, RNG_ALGORITHM};
use asc_core::training::{
    history_to_jsonl, load_impulse_responses, DatasetManifest, TrainConfig, SCENE_LABELS,
};

use crate::util::{atomic_write, debug, for_each_indexed, info};

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn load_model_config(path: Option<&Path>) -> Result<ModelConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Input(format!("{}: {e}", p.display())))?;
            ModelConfig::from_json(&text)
        }
        None => Ok(ModelConfig::default()),
    }
}

fn wav_feature(path: &Path, cfg: &FrontendConfig) -> Result<FeatureMap> {
    let wave = decode_wav(&read_file(path)?)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    log_mel(&wave, cfg).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn out_path_for(input: &Path, out_dir: &Path, ext: &str) -> std::path::PathBuf {
    let stem = input.file_stem().unwrap_or(input.as_os_str());
    out_dir.join(Path::new(stem).with_extension(ext))
}

fn resolve_outputs(
    inputs: &[std::path::PathBuf],
    out: Option<&Path>,
    out_dir: Option<&Path>,
    ext: &str,
) -> Result<Vec<std::path::PathBuf>> {
    match (out, out_dir) {
        (Some(path), None) => {
            if inputs.len() != 1 {
                return Err(Error::Input(
                    "--out takes exactly one input; use --out-dir for batches".into(),
                ));
            }
            Ok(vec![path.to_path_buf()])
        }
        (None, Some(dir)) => {
            std::fs::create_dir_all(dir)?;
            Ok(inputs.iter().map(|p| out_path_for(p, dir, ext)).collect())
        }
        _ => Err(Error::Input("exactly one of --out / --out-dir is required".into())),
    }
}

pub fn features(
    inputs: &[std::path::PathBuf],
    out: Option<&Path>,
    out_dir: Option<&Path>,
    jobs: usize,
    cfg: &FrontendConfig,
) -> Result<i32> {
    cfg.validate()?;
    let outputs = resolve_outputs(inputs, out, out_dir, "melf")?;
    for_each_indexed(inputs.len(), jobs, |i| {
        let feat = wav_feature(&inputs[i], cfg)?;
        debug!("features: {} -> [{} x {}]", inputs[i].display(), feat.n_mels(), feat.n_frames());
        atomic_write(&outputs[i], &feature_to_bytes(&feat))?;
        Ok(())
    })?;
    info!("features: wrote {} file(s)", inputs.len());
    Ok(0)
}

pub fn average(
    manifest_path: &Path,
    audio_root: &Path,
    out_dir: &Path,
    only_label: Option<&str>,
    cfg: &FrontendConfig,
) -> Result<i32> {
    cfg.validate()?;
    if let Some(label) = only_label {
        if !SCENE_LABELS.contains(&label) {
            return Err(Error::Input(format!("unknown scene label `{label}`")));
        }
    }
    let manifest = DatasetManifest::parse(&read_file(manifest_path)?)?;
    let mut by_label: BTreeMap<usize, Vec<FeatureMap>> = BTreeMap::new();
    for row in manifest.rows() {
        let name = SCENE_LABELS[row.label];
        if only_label.is_some_and(|l| l != name) {
            continue;
        }
        let feat = wav_feature(&audio_root.join(&row.path), cfg)?;
        by_label.entry(row.label).or_default().push(feat);
    }
    if by_label.is_empty() {
        return Err(Error::Input("no matching manifest rows".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    for (label, feats) in &by_label {
        let mean = class_average(feats)?;
        let path = out_dir.join(format!("{}.melf", SCENE_LABELS[*label]));
        atomic_write(&path, &feature_to_bytes(&mean))?;
        info!("average: {} over {} clip(s)", path.display(), feats.len());
    }
    Ok(0)
}

pub struct AugmentJob<'a> {
    pub inputs: &'a [std::path::PathBuf],
    pub out: Option<&'a Path>,
    pub out_dir: Option<&'a Path>,
    pub mask: bool,
    pub mixstyle: bool,
    pub ir_dir: Option<&'a Path>,
    pub seed: u64,
    pub jobs: usize,
    pub cfg: AugmentConfig,
}

fn is_wav(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

pub fn augment(job: AugmentJob) -> Result<i32> {
    info!("augment: seed {} ({RNG_ALGORITHM})", job.seed);
    let wav_inputs = job.inputs.iter().filter(|p| is_wav(p)).count();
    if wav_inputs != 0 && wav_inputs != job.inputs.len() {
        return Err(Error::Input("mixing .wav and .melf inputs is not supported".into()));
    }

    if wav_inputs > 0 {
        // waveform domain: impulse-response convolution
        let ir_dir = job.ir_dir.ok_or_else(|| {
            Error::Input("--ir-dir is required to augment waveforms".into())
        })?;
        let irs = load_impulse_responses(ir_dir)?;
        if irs.is_empty() {
            return Err(Error::Input(format!("no .wav files under {}", ir_dir.display())));
        }
        let outputs = resolve_outputs(job.inputs, job.out, job.out_dir, "wav")?;
        for_each_indexed(job.inputs.len(), job.jobs, |i| {
            // stream per input index so results are independent of --jobs
            let mut rng = RngStream::for_worker(job.seed, i as u64);
            let wave = decode_wav(&read_file(&job.inputs[i])?)
                .map_err(|e| Error::Input(format!("{}: {e}", job.inputs[i].display())))?;
            let ir = &irs[rng.below(irs.len())];
            let out = dir_convolve(&wave, ir, &mut rng, &job.cfg)?;
            atomic_write(&outputs[i], &encode_wav_16bit(&out))?;
            Ok(())
        })?;
        return Ok(0);
    }

    // feature domain
    if !job.mask && !job.mixstyle {
        return Err(Error::Input(
            "feature inputs need --mask and/or --mixstyle".into(),
        ));
    }
    let outputs = resolve_outputs(job.inputs, job.out, job.out_dir, "melf")?;
    let mut feats = Vec::with_capacity(job.inputs.len());
    for path in job.inputs {
        feats.push(
            feature_from_bytes(&read_file(path)?)
                .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?,
        );
    }
    if job.mask {
        for (i, feat) in feats.iter_mut().enumerate() {
            let mut rng = RngStream::for_worker(job.seed, i as u64);
            let (masked, spans) = freq_mask(feat, &mut rng, &job.cfg)?;
            debug!("augment: {} masked rows {:?}", job.inputs[i].display(), spans);
            *feat = masked;
        }
    }
    if job.mixstyle {
        let mut rng = RngStream::for_worker(job.seed, u64::MAX); // batch-level stream
        feats = freq_mixstyle(&feats, &mut rng, &job.cfg)?;
    }
    for (feat, path) in feats.iter().zip(&outputs) {
        atomic_write(path, &feature_to_bytes(feat))?;
    }
    Ok(0)
}

pub struct TrainJob<'a> {
    pub manifest: &'a Path,
    pub audio_root: &'a Path,
    pub config: Option<&'a Path>,
    pub out_weights: &'a Path,
    pub history: Option<&'a Path>,
    pub train_cfg: TrainConfig,
    pub ir_dir: Option<&'a Path>,
    pub augment_cfg: AugmentConfig,
    pub frontend_cfg: FrontendConfig,
}

pub fn train(job: TrainJob) -> Result<i32> {
    let model_cfg = load_model_config(job.config)?;
    let manifest = DatasetManifest::parse(&read_file(job.manifest)?)?;
    let irs = match job.ir_dir {
        Some(dir) => load_impulse_responses(dir)?,
        None => Vec::new(),
    };
    info!(
        "train: {} clip(s), {} epochs, batch {}, seed {} ({RNG_ALGORITHM})",
        manifest.len(),
        job.train_cfg.epochs,
        job.train_cfg.batch_size,
        job.train_cfg.seed
    );
    let outcome = asc_core::training::train(
        &model_cfg,
        &job.train_cfg,
        &job.frontend_cfg,
        &job.augment_cfg,
        &manifest,
        job.audio_root,
        &irs,
    )?;
    atomic_write(job.out_weights, &budget::weights_to_bytes_f32(&outcome.weights)?)?;
    if let Some(path) = job.history {
        atomic_write(path, history_to_jsonl(&outcome.history).as_bytes())?;
    }
    if let Some(last) = outcome.history.last() {
        info!("train: final loss {:.4}, accuracy {:.3}", last.loss, last.acc);
    }
    Ok(0)
}

fn load_weights_file(path: &Path) -> Result<WeightStore> {
    Ok(budget::weights_from_bytes(&read_file(path)?)?.into_store())
}

pub fn classify(
    model_path: &Path,
    config: Option<&Path>,
    input: &Path,
    frontend_cfg: &FrontendConfig,
) -> Result<i32> {
    let cfg = load_model_config(config)?;
    let weights = load_weights_file(model_path)?;
    let bytes = if input.as_os_str() == "-" {
        let mut buf = Vec::new();
        std::io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| Error::Input(format!("stdin: {e}")))?;
        buf
    } else {
        read_file(input)?
    };
    let wave = decode_wav(&bytes)?;
    let feat = log_mel(&wave, frontend_cfg)?;
    let logits = forward(&cfg, &weights, &feat)?;
    let probs = softmax(&logits)?;
    let best = argmax(probs.data());
    let label = SCENE_LABELS
        .get(best)
        .copied()
        .unwrap_or("unknown");
    println!("{label}\t{:.6}", probs.data()[best]);
    Ok(0)
}

pub fn audit(config: Option<&Path>, precision: u32, write_config: Option<&Path>) -> Result<i32> {
    let cfg = load_model_config(config)?;
    let report = budget::audit(&cfg, precision)?;
    if let Some(path) = write_config {
        atomic_write(path, cfg.to_json().as_bytes())?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(if report.passes_memory && report.passes_macs { 0 } else { 1 })
}

pub fn quantize(input: &Path, out: &Path) -> Result<i32> {
    let loaded = budget::weights_from_bytes(&read_file(input)?)?;
    let quantized = match loaded {
        budget::LoadedWeights::F32(store) => budget::quantize_f16(&store)?,
        budget::LoadedWeights::F16(store) => store,
    };
    atomic_write(out, &budget::quantized_to_bytes(&quantized)?)?;
    info!(
        "quantize: {} tensor(s), {} parameters at 16-bit",
        quantized.len(),
        quantized.element_count()
    );
    Ok(0)
}
