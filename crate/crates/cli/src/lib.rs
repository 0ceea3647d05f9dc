//! Command-line front end: `train`, `eval`, `bench` and `route-export`.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use cat_core::attention::Variant;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "cat", version, about = "Curvature-adaptive transformer for knowledge-graph link prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a run directory
    Train(TrainArgs),
    /// Filtered MRR and Hits@10 of a checkpoint on one split
    Eval(EvalArgs),
    /// Forward-pass latency and parameter counts with random weights
    Bench(BenchArgs),
    /// Per-triple routing weights of a cat checkpoint
    RouteExport(RouteExportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Cat,
    Euclidean,
    Hyperbolic,
    Spherical,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Cat => Variant::Cat,
            VariantArg::Euclidean => Variant::Euclidean,
            VariantArg::Hyperbolic => Variant::Hyperbolic,
            VariantArg::Spherical => Variant::Spherical,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for cat_core::kg::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => cat_core::kg::Split::Train,
            SplitArg::Valid => cat_core::kg::Split::Valid,
            SplitArg::Test => cat_core::kg::Split::Test,
        }
    }
}

/// Flags shared by every command.
#[derive(Clone, Debug, Args)]
pub struct CommonArgs {
    /// TOML config with flat dotted keys, or a run manifest
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// overrides `train.seed`
    #[arg(long)]
    pub seed: Option<u64>,
    /// overrides `model.variant`
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// directory receiving all outputs
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// extra `key=value` config overrides, applied last
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Clone, Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Clone, Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// checkpoint to evaluate; defaults to `<out-dir>/best.catw`
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

#[derive(Clone, Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 512)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 50)]
    pub warmup: usize,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    /// entity vocabulary size when the config names no dataset
    #[arg(long, default_value_t = 14_541)]
    pub entities: usize,
    /// relation vocabulary size when the config names no dataset
    #[arg(long, default_value_t = 237)]
    pub relations: usize,
}

#[derive(Clone, Debug, Args)]
pub struct RouteExportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// checkpoint to export; defaults to `<out-dir>/best.catw`
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// output file; defaults to `<out-dir>/routing_<split>.tsv`
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => commands::train(&a).map(|_| ()),
        Command::Eval(a) => commands::eval(&a).map(|_| ()),
        Command::Bench(a) => commands::bench(&a).map(|_| ()),
        Command::RouteExport(a) => commands::route_export(&a).map(|_| ()),
    }
}

/// Single-line failure report: `error category=<c> message=<text>`.
pub fn error_line(category: &str, message: &str) -> String {
    let flat = message.split_whitespace().collect::<Vec<_>>().join(" ");
    format!("error category={category} message={flat}")
}
