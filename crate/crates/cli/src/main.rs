//! `icascope`: corpus synthesis, training, classification, evaluation,
//! the recording pipeline and benchmarking.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use icascope::nn::CnnKind;
use icascope::synthgen::Archetype;

#[derive(Debug, Parser)]
#[command(name = "icascope", version, about = "EEG artifact recognition from ICA scalp topographies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled topoplot corpus: images/*.png, labels.csv, corpus.json.
    Synth(SynthArgs),
    /// Train one category's classifier against everything else in a corpus.
    Train(TrainArgs),
    /// Classify every PNG in a directory with the models in --models.
    Classify(ClassifyArgs),
    /// Score models on a labeled corpus, or score a predictions CSV.
    Eval(EvalArgs),
    /// Write a synthetic 32-channel recording, optionally with an injected artifact.
    Simulate(SimulateArgs),
    /// Run notch, windowing, ICA, rendering and classification over a recording.
    Pipeline(PipelineArgs),
    /// Time ICA, topoplot generation and classification on one sub-trial.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PresetArg {
    /// Category ratios of the reference training sets, scaled by --scale.
    Table1,
    /// Counts given with --count LABEL=N.
    Custom,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "table1")]
    pub preset: PresetArg,
    /// Multiplier on the reference counts.
    #[arg(long, default_value_t = 0.25)]
    pub scale: f64,
    /// Per-label count for the custom preset, e.g. `--count B_V=100`.
    #[arg(long = "count", value_parser = parse_count)]
    pub counts: Vec<(String, usize)>,
    /// Upper end of the per-sample noise range.
    #[arg(long, default_value_t = 0.1)]
    pub noise_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// B_V, H_E or E_I.
    #[arg(long, value_parser = parse_kind)]
    pub category: CnnKind,
    /// Corpus directory written by `synth`.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train this many times with seeds seed, seed+1, …
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Directory for `<category>.mdl` and history CSVs.
    #[arg(long, default_value = "models")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 400)]
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    #[arg(long, default_value_t = 1.0)]
    pub clip_norm: f64,
    /// Fraction used for training; the rest validates.
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Directory of `.mdl` files; each registers under its class name.
    #[arg(long, default_value = "models")]
    pub models: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    /// Directory of 134×136 PNG topoplots.
    #[arg(long)]
    pub input: PathBuf,
    /// CSV output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of `.mdl` files, used with --corpus.
    #[arg(long, requires = "corpus")]
    pub models: Option<PathBuf>,
    /// Labeled corpus directory.
    #[arg(long, requires = "models", conflicts_with = "predictions")]
    pub corpus: Option<PathBuf>,
    /// CSV with a `label` column and one 0/1 column per category.
    #[arg(long, required_unless_present = "corpus")]
    pub predictions: Option<PathBuf>,
    /// Also write per-category metrics as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 60.0)]
    pub seconds: f64,
    #[arg(long, default_value_t = 512)]
    pub sample_rate: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Artifact to inject: beog, veog, heog, ecg, emg or if.
    #[arg(long, value_parser = parse_archetype)]
    pub artifact: Option<Archetype>,
    /// Peak artifact amplitude in µV.
    #[arg(long, default_value_t = 100.0)]
    pub amplitude: f64,
    /// Injection span `start:end` in seconds; repeatable. Whole recording when absent.
    #[arg(long = "epoch", value_parser = parse_span)]
    pub epochs: Vec<(f64, f64)>,
}

#[derive(Debug, Args)]
pub struct RecordingArgs {
    /// Recording file (`.csv`, otherwise raw f32).
    #[arg(long)]
    pub recording: PathBuf,
    #[arg(long, default_value_t = 8.0)]
    pub window: f64,
    #[arg(long, default_value_t = 4.0)]
    pub hop: f64,
    /// Power-line frequency to remove; repeatable.
    #[arg(long = "notch", default_values_t = [50.0])]
    pub notch: Vec<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub notch_bandwidth: f64,
    /// Skip notch filtering.
    #[arg(long)]
    pub no_notch: bool,
    /// Fraction of variance kept before ICA.
    #[arg(long, default_value_t = 0.99, conflicts_with = "all_components")]
    pub variance: f64,
    /// One component per channel, without subspace reduction.
    #[arg(long)]
    pub all_components: bool,
    #[arg(long, default_value_t = 32)]
    pub max_components: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    #[command(flatten)]
    pub recording: RecordingArgs,
    /// Detection stream (JSON lines); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    #[command(flatten)]
    pub recording: RecordingArgs,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
}

fn parse_kind(s: &str) -> Result<CnnKind, String> {
    s.parse().map_err(|e: icascope::Error| e.to_string())
}

fn parse_archetype(s: &str) -> Result<Archetype, String> {
    s.parse().map_err(|e: icascope::Error| e.to_string())
}

fn parse_count(s: &str) -> Result<(String, usize), String> {
    let (label, n) = s.split_once('=').ok_or("expected LABEL=COUNT")?;
    let n = n.parse().map_err(|_| format!("bad count `{n}`"))?;
    Ok((label.to_string(), n))
}

fn parse_span(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad time `{v}`"));
    Ok((num(a)?, num(b)?))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
