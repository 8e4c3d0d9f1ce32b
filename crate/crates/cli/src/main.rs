//! `asc`: batch command line for the acoustic scene classification pipeline.
//!
//! Exit codes: 0 on success, 1 on domain errors (bad audio, failed audit),
//! 2 on usage errors. Diagnostics go to stderr; data goes to files or stdout.

mod commands;
mod util;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "asc",
    about = "Acoustic scene classification: features, augmentation, training, \
             inference, and complexity auditing",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Front-end DSP parameters shared by audio-consuming subcommands.
#[derive(Args, Debug, Clone)]
struct FrontendArgs {
    /// Expected sample rate of the input audio
    #[arg(long, default_value_t = 44_100)]
    sample_rate: u32,
    #[arg(long, default_value_t = 8192)]
    n_fft: usize,
    #[arg(long, default_value_t = 8192)]
    win_length: usize,
    #[arg(long, default_value_t = 1364)]
    hop_length: usize,
    #[arg(long, default_value_t = 256)]
    n_mels: usize,
    #[arg(long, default_value_t = 0.0)]
    f_min: f64,
    /// Defaults to half the sample rate
    #[arg(long)]
    f_max: Option<f64>,
}

impl FrontendArgs {
    fn to_config(&self) -> asc_core::frontend::FrontendConfig {
        asc_core::frontend::FrontendConfig {
            sample_rate_hz: self.sample_rate,
            n_fft: self.n_fft,
            win_length: self.win_length,
            hop_length: self.hop_length,
            n_mels: self.n_mels,
            f_min_hz: self.f_min,
            f_max_hz: self.f_max.unwrap_or(self.sample_rate as f64 / 2.0),
            log_floor: 1e-10,
        }
    }
}

/// Augmentation hyperparameters shared by `augment` and `train`.
#[derive(Args, Debug, Clone)]
struct AugmentArgs {
    /// Widest frequency mask in mel bins
    #[arg(long, default_value_t = 64)]
    fm_max_width: usize,
    #[arg(long, default_value_t = 1)]
    fm_num_masks: usize,
    #[arg(long, default_value_t = 1.0)]
    fm_prob: f64,
    #[arg(long, default_value_t = 0.3)]
    fms_alpha: f64,
    #[arg(long, default_value_t = 0.4)]
    fms_prob: f64,
    #[arg(long, default_value_t = 0.6)]
    dir_prob: f64,
}

impl AugmentArgs {
    fn to_config(&self) -> asc_core::augment::AugmentConfig {
        asc_core::augment::AugmentConfig {
            fm_max_width: self.fm_max_width,
            fm_num_masks: self.fm_num_masks,
            fm_prob: self.fm_prob,
            fms_alpha: self.fms_alpha,
            fms_prob: self.fms_prob,
            dir_prob: self.dir_prob,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Convert WAV files to log-mel feature files
    Features {
        /// Input WAV paths
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Output feature file (single input only)
        #[arg(long, conflicts_with = "out_dir")]
        out: Option<PathBuf>,
        /// Output directory; each input becomes `<stem>.melf`
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Parallel workers
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        frontend: FrontendArgs,
    },
    /// Per-label mean feature maps over a manifest
    Average {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory the manifest's paths are relative to
        #[arg(long)]
        audio_root: PathBuf,
        /// Output directory; each label becomes `<label>.melf`
        #[arg(long)]
        out_dir: PathBuf,
        /// Restrict to one scene label
        #[arg(long)]
        label: Option<String>,
        #[command(flatten)]
        frontend: FrontendArgs,
    },
    /// Seeded augmentation: impulse-response convolution for WAV inputs,
    /// frequency masking and style mixing for feature inputs
    Augment {
        /// Input files: `.wav` or `.melf`
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Output file (single input only)
        #[arg(long, conflicts_with = "out_dir")]
        out: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Apply frequency masking to feature inputs
        #[arg(long)]
        mask: bool,
        /// Mix per-row statistics across the whole input batch
        #[arg(long)]
        mixstyle: bool,
        /// Directory of impulse-response WAV files
        #[arg(long)]
        ir_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        augment: AugmentArgs,
    },
    /// Train on a manifest of labeled WAV files
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        audio_root: PathBuf,
        /// Model config JSON; the shipped default when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where the trained 32-bit weights are written
        #[arg(long)]
        out_weights: PathBuf,
        /// Per-epoch JSON-lines history
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long, default_value_t = 150)]
        epochs: usize,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr_max: f64,
        #[arg(long, default_value_t = 10)]
        warmup_epochs: usize,
        #[arg(long, default_value_t = 0.0)]
        label_smoothing: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory of impulse-response WAV files for DIR augmentation
        #[arg(long)]
        ir_dir: Option<PathBuf>,
        #[command(flatten)]
        augment: AugmentArgs,
        #[command(flatten)]
        frontend: FrontendArgs,
    },
    /// Classify one WAV file (`-` reads it from stdin)
    Classify {
        /// Weights file, 32- or 16-bit
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        frontend: FrontendArgs,
    },
    /// Parameter, MAC, and memory audit against the challenge limits
    Audit {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Storage precision in bits: 16 or 32
        #[arg(long, default_value_t = 16)]
        precision: u32,
        /// Also write the audited config as JSON
        #[arg(long)]
        write_config: Option<PathBuf>,
    },
    /// Re-encode a weights file at 16-bit precision
    Quantize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    util::init_logging();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Features { inputs, out, out_dir, jobs, frontend } => {
            commands::features(&inputs, out.as_deref(), out_dir.as_deref(), jobs, &frontend.to_config())
        }
        Command::Average { manifest, audio_root, out_dir, label, frontend } => {
            commands::average(&manifest, &audio_root, &out_dir, label.as_deref(), &frontend.to_config())
        }
        Command::Augment { inputs, out, out_dir, mask, mixstyle, ir_dir, seed, jobs, augment } => {
            commands::augment(commands::AugmentJob {
                inputs: &inputs,
                out: out.as_deref(),
                out_dir: out_dir.as_deref(),
                mask,
                mixstyle,
                ir_dir: ir_dir.as_deref(),
                seed,
                jobs,
                cfg: augment.to_config(),
            })
        }
        Command::Train {
            manifest, audio_root, config, out_weights, history,
            epochs, batch_size, lr_max, warmup_epochs, label_smoothing, seed,
            ir_dir, augment, frontend,
        } => commands::train(commands::TrainJob {
            manifest: &manifest,
            audio_root: &audio_root,
            config: config.as_deref(),
            out_weights: &out_weights,
            history: history.as_deref(),
            train_cfg: asc_core::training::TrainConfig {
                epochs,
                batch_size,
                lr_max,
                warmup_epochs,
                label_smoothing,
                seed,
                ..asc_core::training::TrainConfig::default()
            },
            ir_dir: ir_dir.as_deref(),
            augment_cfg: augment.to_config(),
            frontend_cfg: frontend.to_config(),
        }),
        Command::Classify { model, config, input, frontend } => {
            commands::classify(&model, config.as_deref(), &input, &frontend.to_config())
        }
        Command::Audit { config, precision, write_config } => {
            commands::audit(config.as_deref(), precision, write_config.as_deref())
        }
        Command::Quantize { input, out } => commands::quantize(&input, &out),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
