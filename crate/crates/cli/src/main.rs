//! `cebag`: collect traces, score them, and compare hallucination detectors.

mod cmd;
mod error;
mod inputs;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

use crate::error::{CliError, Exit};

#[derive(Debug, Parser)]
#[command(name = "cebag", version, about = "Log-probability hallucination scores and detector evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Collect paired traces from a chat-completions endpoint.
    Collect(CollectArgs),
    /// Score every sample of a corpus.
    Score(ScoreArgs),
    /// Compare detectors on a labeled corpus or score file.
    Eval(EvalArgs),
    /// Label-threshold stability and weight sweeps.
    Sweep(SweepArgs),
    /// Write a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Check the gain/PMI identity on random discrete joint tables.
    PmiCheck(PmiArgs),
    /// Re-render a saved evaluation report.
    Report(ReportArgs),
}

#[derive(Debug, clap::Args)]
pub struct CollectArgs {
    /// JSONL tasks: sample_id, question, image_ref, optional green_score.
    #[arg(long)]
    pub tasks: PathBuf,
    /// Base URL of the endpoint, e.g. http://localhost:8000/v1.
    #[arg(long)]
    pub endpoint: String,
    #[arg(long)]
    pub model: String,
    /// Output corpus, appended to as tasks finish.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    /// Skip tasks already present in the output corpus.
    #[arg(long)]
    pub resume: bool,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 120.0)]
    pub timeout_secs: f64,
    /// Retries per request after the first attempt.
    #[arg(long, default_value_t = 2)]
    pub retry_budget: u32,
    /// First retry delay in milliseconds; doubles on each retry.
    #[arg(long, default_value_t = 500)]
    pub retry_backoff_ms: u64,
    /// File holding the bearer token. Defaults to the CEBAG_API_KEY variable.
    #[arg(long)]
    pub api_key_file: Option<PathBuf>,
    /// Write one JSON line per failed task here.
    #[arg(long)]
    pub failures: Option<PathBuf>,
    /// Log full request and response bodies.
    #[arg(long)]
    pub log_bodies: bool,
    /// Log every request with its content hash.
    #[arg(short, long)]
    pub verbose: bool,
}

#[derive(Debug, clap::Args)]
pub struct ScoreArgs {
    /// Trace corpus.
    pub input: PathBuf,
    /// Scores output, one line per sample in input order.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Trace corpus or score file.
    pub input: PathBuf,
    /// Labels for a score file: a corpus or lines of sample_id plus green_score and/or label.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Samples with green_score strictly below this are hallucinated.
    #[arg(long, default_value_t = 1.0)]
    pub green_threshold: f64,
    /// Report only these detectors.
    #[arg(long, value_delimiter = ',')]
    pub detectors: Option<Vec<String>>,
    /// Externally computed scores, NAME=PATH, repeatable.
    #[arg(long = "external", value_parser = inputs::parse_external)]
    pub external: Vec<(String, PathBuf)>,
    #[arg(long, value_delimiter = ',', default_values_t = cebag_core::metrics::DEFAULT_STABILITY_THRESHOLDS)]
    pub thresholds: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = cebag_core::scoring::DEFAULT_LAMBDA_GRID)]
    pub lambda_grid: Vec<f64>,
    /// JSON report output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// CSV table output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    /// Trace corpus with a green_score on every sample.
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = cebag_core::metrics::DEFAULT_STABILITY_THRESHOLDS)]
    pub thresholds: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = cebag_core::scoring::DEFAULT_LAMBDA_GRID)]
    pub lambda_grid: Vec<f64>,
    /// Threshold used for the weight sweep.
    #[arg(long, default_value_t = 1.0)]
    pub green_threshold: f64,
    #[arg(long, value_delimiter = ',')]
    pub detectors: Option<Vec<String>>,
    /// Receives stability.csv, lambda.csv and sweep.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, clap::Args)]
#[command(group(ArgGroup::new("source").required(true).args(["preset", "spec"])))]
pub struct SynthArgs {
    /// separable, hard or label-noise.
    #[arg(long)]
    pub preset: Option<String>,
    /// JSON generator settings.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct PmiArgs {
    /// Largest table dimension.
    #[arg(long, default_value_t = 16)]
    pub size: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print the summary as JSON.
    #[arg(long)]
    pub json: bool,
    /// Adds a constant to the PMI side; only useful to see a failing run.
    #[arg(long, hide = true, default_value_t = 0.0, allow_negative_numbers = true)]
    pub pmi_offset: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// JSON report written by `eval --report`.
    pub report: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
}

fn run(cli: Cli) -> Result<Exit, CliError> {
    match cli.command {
        Command::Collect(a) => cmd::collect::run(a),
        Command::Score(a) => cmd::score::run(a),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Sweep(a) => cmd::sweep::run(a),
        Command::Synth(a) => cmd::synth::run(a),
        Command::PmiCheck(a) => cmd::pmi::run(a),
        Command::Report(a) => cmd::report::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(exit) => ExitCode::from(exit as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit as u8)
        }
    }
}
