use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod plot;

use config::{InspectorKind, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "leafstream", version, about = "Distill a feed-forward network into layer-wise trees and inspect its discretized streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults reproduce the Gaussian-mixture run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for every artifact.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.override_with(self.seed, self.out.clone());
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the network and write weights.json.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Fit the distilling ensemble and write the stream table and per-object errors.
    Distill {
        #[command(flatten)]
        common: Common,
    },
    /// Fit inspectors for stream labels.
    Inspect {
        #[command(flatten)]
        common: Common,
        /// Stream label to inspect; repeatable.
        #[arg(long = "label")]
        labels: Vec<usize>,
        /// Also inspect the N most populated reliable streams.
        #[arg(long)]
        top: Option<usize>,
        #[arg(long, value_enum)]
        kind: Option<InspectorKind>,
    },
    /// Assign new objects to streams and decide whether they may be interpreted.
    Classify {
        #[command(flatten)]
        common: Common,
        /// CSV with the training feature columns.
        #[arg(long)]
        input: PathBuf,
    },
    /// Write heatmap, stream and profile SVGs for 2-D data.
    Plot {
        #[command(flatten)]
        common: Common,
    },
    /// Refit the ensemble on fresh samples from nested regions.
    Adaptive {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { common, epochs } => commands::cmd_train(&common.load()?, epochs),
        Command::Distill { common } => commands::cmd_distill(&common.load()?),
        Command::Inspect {
            common,
            labels,
            top,
            kind,
        } => commands::cmd_inspect(&common.load()?, &labels, top, kind),
        Command::Classify { common, input } => commands::cmd_classify(&common.load()?, &input),
        Command::Plot { common } => commands::cmd_plot(&common.load()?),
        Command::Adaptive { common } => commands::cmd_adaptive(&common.load()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
