mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Sex-attribute protection for speaker embeddings and pitch, with the
/// evaluation harness used to measure it.
#[derive(Debug, Parser)]
#[command(name = "zevox", version, arg_required_else_help = true)]
pub struct Cli {
    /// Seed for every seeded step; falls back to $ZEVOX_SEED, then the built-in default.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for per-record and per-file work.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,

    /// Length-normalize embeddings as they are read.
    #[arg(long, global = true)]
    pub length_norm: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic two-sex embedding corpus.
    SynthData(SynthArgs),
    /// Fit a flow whose first base coordinate is the sex LLR.
    TrainFlow(TrainArgs),
    /// Protect an embedding CSV with a trained flow or the global mean.
    ProtectEmb(ProtectEmbArgs),
    /// Compute pitch targets from a `path,spk_id,sex` manifest.
    F0Targets(F0TargetsArgs),
    /// Move a WAV file's pitch onto the targets.
    ProtectAudio(ProtectAudioArgs),
    /// Train a sex classifier on one CSV and score another.
    Attack(AttackArgs),
    /// Cosine verification trials over one embedding CSV.
    Asv(AsvArgs),
    /// Speaker log-similarity matrix as CSV and PGM.
    Simmat(SimmatArgs),
    /// Full run: data, flow, attacks, verification and similarity matrices.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kind {
    Linear,
    Coupling,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Linear => "linear",
            Kind::Coupling => "coupling",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AsvCondition {
    F,
    M,
    #[value(name = "FM")]
    Fm,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 50)]
    pub speakers_per_sex: usize,
    #[arg(long, default_value_t = 10)]
    pub utts_per_speaker: usize,
    /// `m` spreads magnitude m over every coordinate, `axis:m` puts it on
    /// coordinate 0, `a,b,...` gives the vector.
    #[arg(long, default_value = "6", allow_hyphen_values = true)]
    pub shift: String,
    #[arg(long, default_value_t = 1.0)]
    pub speaker_spread: f64,
    #[arg(long, default_value_t = 0.5)]
    pub utterance_spread: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Kind::Linear)]
    pub kind: Kind,
    /// Variance of the LLR coordinate in the base space.
    #[arg(long, default_value_t = 10.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub validation_fraction: f64,
    #[arg(long)]
    pub no_cosine_decay: bool,
    #[arg(long, default_value_t = 6)]
    pub blocks: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 3.0)]
    pub scale_clamp: f64,
    /// Per-epoch loss CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProtectEmbArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, required_unless_present = "global", conflicts_with = "global")]
    pub model: Option<PathBuf>,
    /// Replace every vector with the speaker-balanced mean.
    #[arg(long)]
    pub global: bool,
    /// CSV the global mean is taken from; defaults to the input.
    #[arg(long, requires = "global")]
    pub mean_from: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PitchArgs {
    #[arg(long, default_value_t = 60.0)]
    pub f0_min: f64,
    #[arg(long, default_value_t = 400.0)]
    pub f0_max: f64,
    /// Seconds.
    #[arg(long, default_value_t = 0.04)]
    pub window: f64,
    /// Seconds.
    #[arg(long, default_value_t = 0.01)]
    pub hop: f64,
    #[arg(long, default_value_t = 0.15)]
    pub yin_threshold: f64,
}

#[derive(Debug, Args)]
pub struct F0TargetsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Targets JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pitch: PitchArgs,
}

#[derive(Debug, Args)]
pub struct ProtectAudioArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub targets: PathBuf,
    /// Report JSON; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub pitch: PitchArgs,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// Embeddings the attacker learns from.
    #[arg(long)]
    pub train: PathBuf,
    /// Embeddings the attacker scores.
    #[arg(long)]
    pub test: PathBuf,
    /// Report JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// ECE profile CSV.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
}

#[derive(Debug, Args)]
pub struct AsvArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = AsvCondition::F)]
    pub condition: AsvCondition,
    /// Report JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimmatArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Writes `<prefix>.csv` and `<prefix>.pgm`.
    #[arg(long)]
    pub out_prefix: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    pub scale: f64,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// `key = value` file, or `default`.
    #[arg(long, default_value = "default")]
    pub config: String,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.into()).build_global() {
            eprintln!("zevox: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let name = commands::name(&cli.command);
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zevox {name}: {e}");
            ExitCode::from(1)
        }
    }
}
