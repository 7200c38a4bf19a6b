//! The `carto` command line: ingest, score, map, select, combine,
//! curriculum, stats and synth.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use carto_core::{Aspect, MeasureKind};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "carto", version, about = "Dataset cartography for sequence-to-sequence training dynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dynamics log (and optionally a corpus) and summarise it.
    Ingest(IngestArgs),
    /// Compute confidence, variability and correctness per example.
    Score(ScoreArgs),
    /// Render a data map from a scores file.
    Map(MapArgs),
    /// Select the top fraction of examples under one aspect.
    Select(SelectArgs),
    /// Merge two aspects into one subset.
    Combine(CombineArgs),
    /// Build a training curriculum from a difficulty ordering.
    Curriculum(CurriculumArgs),
    /// Length and rarity statistics of subsets.
    Stats(StatsArgs),
    /// Generate synthetic dynamics with planted regions.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Also check the corpus against the log.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Summary JSON; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    #[arg(long, default_value_t = 3)]
    pub min_epoch: u32,
    #[arg(long)]
    pub max_epoch: u32,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "invppl", value_parser = parse_measure)]
    pub measure: MeasureKind,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// SVG output.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the map points as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Plot a seeded random sample of this fraction of the points.
    #[arg(long)]
    pub sample: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 800)]
    pub width: u32,
    #[arg(long, default_value_t = 600)]
    pub height: u32,
}

#[derive(Debug, Args)]
pub struct RepairArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Restore full vocabulary coverage at the same size (needs --corpus).
    #[arg(long, requires = "corpus")]
    pub oov_repair: bool,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, value_parser = parse_aspect)]
    pub aspect: Aspect,
    #[arg(long)]
    pub fraction: f64,
    #[command(flatten)]
    pub repair: RepairArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the ids one per line.
    #[arg(long)]
    pub ids_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CombineArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Two aspects, e.g. `hard,ambiguous`.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_aspect)]
    pub aspects: Vec<Aspect>,
    #[arg(long)]
    pub fraction: f64,
    #[command(flatten)]
    pub repair: RepairArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ids_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    ExpPacing,
    Binned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleFormat {
    Jsonl,
    IdsOnly,
}

#[derive(Debug, Args)]
pub struct CurriculumArgs {
    #[arg(long, value_enum)]
    pub strategy: Strategy,
    /// Scores file the difficulty ordering is taken from.
    #[arg(long)]
    pub order_from: PathBuf,
    #[arg(long, default_value = "hard", value_parser = parse_aspect)]
    pub aspect: Aspect,
    /// Present the ordering back to front.
    #[arg(long)]
    pub reverse: bool,
    #[arg(long)]
    pub total_steps: usize,
    #[arg(long, default_value_t = 0.04)]
    pub start_fraction: f64,
    #[arg(long, default_value_t = 1.9)]
    pub scale: f64,
    /// Required for the binned strategy.
    #[arg(long, required_if_eq("strategy", "binned"))]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "jsonl")]
    pub format: ScheduleFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Subset files; repeatable.
    #[arg(long = "subset", required = true)]
    pub subsets: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub easy: usize,
    #[arg(long, default_value_t = 200)]
    pub ambiguous: usize,
    #[arg(long, default_value_t = 200)]
    pub hard: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: u32,
    #[arg(long, default_value_t = 3)]
    pub min_len: usize,
    #[arg(long, default_value_t = 12)]
    pub max_len: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Receives dynamics.jsonl, corpus.tsv and labels.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_measure(s: &str) -> Result<MeasureKind, String> {
    s.parse::<MeasureKind>().map_err(|e| e.to_string())
}

fn parse_aspect(s: &str) -> Result<Aspect, String> {
    s.parse::<Aspect>().map_err(|e| e.to_string())
}

/// A failure after argument parsing.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(carto_core::Error),
}

impl From<carto_core::Error> for Failure {
    fn from(e: carto_core::Error) -> Self {
        Failure::Data(e)
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("CARTO_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("CARTO_THREADS must be a non-negative integer, got {value:?}")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = configure_threads().and_then(|()| commands::dispatch(&cli.command));
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}
