mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "bandgap", version, about = "Band-gap augmentation, countermeasure scoring and evaluation")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "BANDGAP_CONFIG")]
    config: Option<PathBuf>,

    /// Worker threads for file-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply an augmentation policy to a directory or manifest of WAV files.
    Augment(AugmentArgs),
    /// Compute minDCF, actDCF, Cllr and EER for a score file.
    Eval(EvalArgs),
    /// Fuse score files with fixed weights, or search for weights.
    Fuse(FuseArgs),
    /// Duration statistics and histogram for a manifest.
    Stats(StatsArgs),
    /// Render a log-magnitude spectrogram as a binary PGM image.
    Spectrogram(SpectrogramArgs),
    /// Train the linear countermeasure.
    Train(TrainArgs),
    /// Score a manifest with a trained model.
    Score(ScoreArgs),
    /// Generate a synthetic bona fide / spoof corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Directory of .wav files or a manifest TSV.
    #[arg(long)]
    input: PathBuf,
    /// Policy TOML; defaults to the config's [augment] section.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Noise / music / RIR manifest (`path<TAB>category`).
    #[arg(long)]
    noise_bank: Option<PathBuf>,
    /// Epoch index mixed into the per-file generator.
    #[arg(long, default_value_t = 0)]
    epoch: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    p_target: Option<f64>,
    #[arg(long)]
    c_miss: Option<f64>,
    #[arg(long)]
    c_fa: Option<f64>,
    /// Human-readable table instead of key=value lines.
    #[arg(long)]
    text: bool,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Fusion spec TSV (`system_id<TAB>weight`).
    #[arg(long, conflicts_with_all = ["preset", "search"])]
    spec: Option<PathBuf>,
    /// Named weight preset, e.g. paper-7way.
    #[arg(long, conflicts_with = "search")]
    preset: Option<String>,
    /// Score files as `system_id=path`; order sets system order.
    #[arg(long = "scores", value_name = "ID=PATH", required = true, num_args = 1..)]
    scores: Vec<String>,
    /// Standardise each system before fusing.
    #[arg(long)]
    z_norm: bool,
    /// Grid-search weights for `eer` or `min_dcf` instead of fusing.
    #[arg(long, requires = "key")]
    search: Option<String>,
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    bin_width: f64,
    /// Write the histogram CSV here.
    #[arg(long)]
    histogram: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training manifest; defaults to paths.train_manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output model; defaults to paths.model.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    noise_bank: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Manifest to score; defaults to paths.eval_manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Score TSV; defaults to paths.scores.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_per_class: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Freqmask every file at a random 4-7 kHz threshold.
    #[arg(long)]
    gapped: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            log::error!("{failures} item(s) failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(2)
        }
    }
}
