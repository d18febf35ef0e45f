//! `ictal`: patient-independent seizure detection from raw EEG.
//!
//! Exit codes: 0 success, 1 runtime failure (the diagnostic names the
//! failing stage), 2 configuration or usage errors.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Overrides;

#[derive(Parser)]
#[command(name = "ictal", version, about = "Adversarial EEG decomposition for patient-independent seizure detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic EEG dataset with exact seizure annotations.
    Synth(SynthArgs),
    /// Convert manifest recordings (e.g. CSV) into the binary format.
    Ingest(IngestArgs),
    /// Train a single fold: hold one subject out, train on the rest.
    Train(TrainArgs),
    /// Leave-one-subject-out over every subject, plus an aggregate table.
    Loo(LooArgs),
    /// Score a held-out subject against a saved checkpoint.
    Eval(EvalArgs),
    /// Export a subject's mean attention topography from a checkpoint.
    AttentionMap(AttentionArgs),
    /// Finite-difference verification of every primitive's gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for recordings, manifest and balance report.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 14)]
    subjects: u32,
    /// Seconds of signal per subject.
    #[arg(long, default_value_t = 500.0)]
    seconds: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit CSV + annotation sidecars instead of binary recordings.
    #[arg(long)]
    csv: bool,
    /// Length of alternating normal/seizure blocks in seconds.
    #[arg(long, default_value_t = 25.0)]
    block_seconds: f64,
    #[arg(long, default_value_t = 0.15)]
    noise_level: f64,
    #[arg(long, default_value_t = 2.0)]
    dc_offset: f64,
    /// How many leading montage channels carry the injected bursts.
    #[arg(long, default_value_t = 13)]
    seizure_channels: usize,
    /// Window length used for the class-balance report.
    #[arg(long, default_value_t = 250)]
    window_len: usize,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Global amplitude scale applied while converting.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Subject to hold out as the test set.
    #[arg(long)]
    fold: u32,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct LooArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Subject whose windows are scored.
    #[arg(long)]
    fold: u32,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct AttentionArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Subject whose windows are averaged into the topography.
    #[arg(long)]
    fold: u32,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random points per primitive.
    #[arg(long, default_value_t = 20)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, result) = match &cli.command {
        Command::Synth(args) => ("synth", run_synth(args)),
        Command::Ingest(args) => (
            "ingest",
            runner::ingest(&args.manifest, &args.out, args.scale).map_err(RunError::Stage),
        ),
        Command::Train(args) => ("train", run_with_config(&args.overrides, |run| {
            runner::train_single(&args.manifest, &args.out, args.fold, run)
        })),
        Command::Loo(args) => ("loo", run_with_config(&args.overrides, |run| {
            runner::loo(&args.manifest, &args.out, run)
        })),
        Command::Eval(args) => ("eval", run_with_config(&args.overrides, |run| {
            runner::eval(&args.checkpoint, &args.manifest, args.fold, &args.out, run)
        })),
        Command::AttentionMap(args) => ("attention-map", run_with_config(&args.overrides, |run| {
            runner::attention_map(&args.checkpoint, &args.manifest, args.fold, &args.out, run)
        })),
        Command::Gradcheck(args) => (
            "gradcheck",
            runner::gradcheck(args.points, args.seed).map_err(RunError::Stage),
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(2)
        }
        Err(RunError::Stage(e)) => {
            eprintln!("error in stage `{stage}`: {e:#}");
            ExitCode::from(1)
        }
    }
}

enum RunError {
    Config(anyhow::Error),
    Stage(anyhow::Error),
}

impl From<anyhow::Error> for RunError {
    fn from(e: anyhow::Error) -> Self {
        RunError::Stage(e)
    }
}

fn run_with_config(
    overrides: &Overrides,
    body: impl FnOnce(&config::RunConfig) -> anyhow::Result<()>,
) -> Result<(), RunError> {
    let run = config::resolve(overrides).map_err(RunError::Config)?;
    body(&run).map_err(RunError::Stage)
}

fn run_synth(args: &SynthArgs) -> Result<(), RunError> {
    runner::synth(&runner::SynthParams {
        out: args.out.clone(),
        subjects: args.subjects,
        seconds: args.seconds,
        seed: args.seed,
        csv: args.csv,
        block_seconds: args.block_seconds,
        noise_level: args.noise_level,
        dc_offset: args.dc_offset,
        seizure_channels: args.seizure_channels,
        window_len: args.window_len,
    })
    .map_err(RunError::Stage)
}
