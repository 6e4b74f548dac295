use crate::dataset::{DatasetSource, Prepared, SplitPlan};
use crate::error::HarnessError;
use clap::{Args, Parser, Subcommand};
use ducs::selection::{Method, WMode};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "ducs", version, about = "Unreliability-driven coreset selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the surrogate on the training split and record per-sample dynamics.
    TrainDynamics(TrainDynamicsArgs),
    /// Score a recorded trace and write the selected coreset.
    Select(SelectArgs),
    /// Retrain on a coreset and report test accuracy over seeds.
    RetrainEval(RetrainEvalArgs),
    /// Run training, selection and retraining for every method, rate and seed.
    Experiment(ExperimentArgs),
    #[command(subcommand)]
    Trace(TraceCommand),
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Debug, Subcommand)]
pub enum TraceCommand {
    /// Print one line per sample: index, final F, last-window V, last correctness bit.
    Inspect(InspectArgs),
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Render an experiment report as a text table.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// idx:IMAGES,LABELS | csv:PATH:LABELCOL | blobs:SPEC
    #[arg(long, value_name = "SOURCE")]
    pub dataset: Option<String>,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

impl DataArgs {
    pub fn load(&self) -> Result<Option<Prepared>, HarnessError> {
        let Some(text) = &self.dataset else {
            return Ok(None);
        };
        let source: DatasetSource = text.parse()?;
        let plan = SplitPlan {
            train_frac: self.train_frac,
            val_frac: self.val_frac,
            seed: self.split_seed,
        };
        Prepared::load(source, plan).map(Some)
    }

    pub fn require(&self) -> Result<Prepared, HarnessError> {
        self.load()?
            .ok_or_else(|| HarnessError::Usage("--dataset is required".into()))
    }
}

#[derive(Debug, Args)]
pub struct TrainDynamicsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// key=value training config
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trace file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Also store per-epoch margins and final probabilities (needed by entropy, el2n, aum)
    #[arg(long)]
    pub extended_trace: bool,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value = "ducs")]
    pub method: Method,
    #[arg(long)]
    pub beta: f64,
    /// 1-based first epoch of the variance window (default: the latest window)
    #[arg(long, conflicts_with = "grid_search")]
    pub window_start: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub window_k: usize,
    #[arg(long, default_value = "range")]
    pub w_mode: WMode,
    /// Pick the window start by validation accuracy of short retrains (needs --dataset)
    #[arg(long)]
    pub grid_search: bool,
    #[arg(long, default_value_t = 10)]
    pub grid_step: usize,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for the random baseline and grid-search retrains (default: the trace seed)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Coreset file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Score CSV to write (default: OUT with `.csv` appended)
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetrainEvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub coreset: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Comma-separated retrain seeds
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// JSON file to write (also printed)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "ducs,random")]
    pub method: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    pub beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub window_k: Vec<usize>,
    #[arg(long, conflicts_with = "grid_search")]
    pub window_start: Option<usize>,
    #[arg(long, default_value = "range")]
    pub w_mode: WMode,
    #[arg(long)]
    pub grid_search: bool,
    #[arg(long, default_value_t = 10)]
    pub grid_step: usize,
    #[arg(long)]
    pub extended_trace: bool,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Suppress progress lines on stderr
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub window_k: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// report.json written by `experiment`
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), HarnessError> {
    use crate::commands::*;
    match cli.command {
        Command::TrainDynamics(a) => train_dynamics(&a),
        Command::Select(a) => select(&a),
        Command::RetrainEval(a) => retrain_eval(&a),
        Command::Experiment(a) => experiment(&a),
        Command::Trace(TraceCommand::Inspect(a)) => trace_inspect(&a),
        Command::Report(ReportCommand::Render(a)) => report_render(&a),
    }
}
