mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "wavescope",
    version,
    about = "Raw-waveform CNNs, learned filterbanks and wavelet transforms"
)]
struct Cli {
    /// Settings file of `key = value` lines; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed; overrides WAVESCOPE_SEED and the settings file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spectrum, spectrogram or scalogram of a WAV file.
    Transform(TransformArgs),
    /// MFCC matrix of a WAV file as CSV.
    Mfcc(MfccArgs),
    /// Generate a band-pass noise dataset with an UrbanSound8K-style manifest.
    Synth(SynthArgs),
    /// Train a model and save a checkpoint.
    Train(TrainArgs),
    /// Cross-validate a configuration, or score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Centre frequencies, bandwidths and spectra of a checkpoint's first layer.
    AnalyzeFilters(AnalyzeArgs),
    /// Recover a waveform from a checkpoint's first-layer activations.
    Reconstruct(ReconstructArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Fft,
    Stft,
    Cwt,
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub op: Op,
    #[arg(long)]
    pub out: PathBuf,
    /// STFT window length in samples.
    #[arg(long, default_value_t = 256)]
    pub window: usize,
    /// STFT or CWT hop in samples.
    #[arg(long)]
    pub hop: Option<usize>,
    /// Wavelet basis for the CWT.
    #[arg(long)]
    pub wavelet: Option<String>,
    /// Number of log-spaced CWT scales.
    #[arg(long)]
    pub n_scales: Option<usize>,
}

#[derive(Args, Debug)]
pub struct MfccArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub n_mfcc: Option<usize>,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long)]
    pub sr: Option<u32>,
    #[arg(long, default_value_t = 1.0)]
    pub seconds: f64,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Input pipeline: raw or mfcc.
    #[arg(long)]
    pub pipeline: Option<String>,
    #[arg(long)]
    pub f1: Option<usize>,
    #[arg(long = "nbf")]
    pub nb_f: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub sr: Option<u32>,
    #[arg(long)]
    pub n_mfcc: Option<usize>,
    #[arg(long)]
    pub clip_seconds: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset root holding the audio (flat or in `fold{k}/` folders).
    #[arg(long)]
    pub data: PathBuf,
    /// Metadata CSV; defaults to `<data>/metadata.csv`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Fold held out for testing; all folds train when omitted.
    #[arg(long)]
    pub fold_out: Option<u8>,
    #[arg(long, default_value = "model.bin")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Cross-validate over the manifest's folds.
    #[arg(long, conflicts_with = "ckpt")]
    pub kfold: bool,
    /// Train on clips and predict each file by majority vote over its clips.
    #[arg(long)]
    pub vote_clips: bool,
    /// Comma-separated folds to hold out; every fold when omitted.
    #[arg(long, value_delimiter = ',')]
    pub folds: Option<Vec<u8>>,
    /// Score this checkpoint instead of cross-validating.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Report CSV; a `_folds` companion is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// FFT length for the kernel spectra.
    #[arg(long, default_value_t = wavescope::analysis::DEFAULT_PAD)]
    pub pad: usize,
    /// Also map this recording's first-layer activations against its CWT.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub cm: Option<f64>,
    /// least_squares or spectral_division.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Err(e) = run(Cli::parse()) {
        let broken_pipe = e.chain().any(|c| {
            let io = c.downcast_ref::<std::io::Error>().or_else(|| {
                match c.downcast_ref::<csv::Error>()?.kind() {
                    csv::ErrorKind::Io(io) => Some(io),
                    _ => None,
                }
            });
            io.is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
        });
        if broken_pipe {
            return;
        }
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let settings = config::Settings::load(cli.config.as_deref())?;
    let seed = cli.seed;
    match cli.command {
        Command::Transform(a) => commands::transform(&a, &settings),
        Command::Mfcc(a) => commands::mfcc(&a, &settings),
        Command::Synth(a) => commands::synth(&a, &settings, settings.seed(seed, 0)?),
        Command::Train(a) => commands::train(&a, &settings, settings.seed(seed, 0)?),
        Command::Eval(a) => commands::eval(&a, &settings, settings.seed(seed, 0)?),
        Command::AnalyzeFilters(a) => commands::analyze_filters(&a),
        Command::Reconstruct(a) => commands::reconstruct(&a, &settings),
    }
}
