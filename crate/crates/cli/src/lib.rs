//! The `psa` command-line tool: train, evaluate, predict and preprocess.

pub mod commands;
pub mod config;
pub mod encode;
pub mod error;

use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::Options;
pub use error::{CliError, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "psa", version, about = "Persian movie-review sentiment classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split, train, save the model and report on the test part.
    Train(CommonArgs),
    /// Score a saved model on a labeled dataset.
    Evaluate(CommonArgs),
    /// Classify lines of text.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        /// Text to classify, one review per line.
        #[arg(long, conflicts_with = "input")]
        text: Option<String>,
        /// File with one review per line (standard input when neither
        /// --text nor --input is given).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Dump the stemmed tokens of every review.
    Preprocess(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for the split, initialization and shuffling
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model file (written by train, read by evaluate and predict)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Review TSV
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Word vectors in text format
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Report JSON for train/evaluate; token dump for preprocess
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl From<CommonArgs> for Options {
    fn from(a: CommonArgs) -> Self {
        Options {
            config: a.config,
            seed: a.seed,
            model: a.model,
            dataset: a.dataset,
            embeddings: a.embeddings,
            out: a.out,
        }
    }
}

pub fn run(cli: Cli, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => commands::cmd_train(&a.into(), stdout),
        Command::Evaluate(a) => commands::cmd_evaluate(&a.into(), stdout),
        Command::Predict { common, text, input } => {
            commands::cmd_predict(&common.into(), text.as_deref(), input.as_deref(), stdin, stdout)
        }
        Command::Preprocess(a) => commands::cmd_preprocess(&a.into(), stdout),
    }
}
