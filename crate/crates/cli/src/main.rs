//! `mia`: scoring, evaluation, n-gram overlap analysis, edited members and
//! toy-LM ablations from one binary.
//!
//! Options may also come from a TOML file given with `--config`; flags win
//! over the file, and the file wins over built-in defaults. Exit codes: 0 on
//! success, 1 for usage errors, 2 for invalid data, 3 for internal failures.
//! Failures print a single JSON object on stderr.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{ablate, bench, eval, ngram, perturb, score, toylm};
use crate::config::ConfigFile;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mia", version, about = "Membership-inference evaluation harness")]
struct Cli {
    /// TOML file with one table per subcommand, e.g. [score] or [ngram.build]
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads [default: number of cores]; never changes outputs
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Log progress to stderr (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute attack scores from per-token log-probabilities
    Score(score::ScoreArgs),
    /// Bootstrap AUC / TPR@FPR reports from a score table
    Eval(eval::EvalArgs),
    /// N-gram index construction and overlap analysis
    #[command(subcommand)]
    Ngram(ngram::NgramCommand),
    /// Benchmark sampling and shifted-benchmark assembly
    #[command(subcommand)]
    Benchmark(bench::BenchCommand),
    /// Edited members and the calibrated-threshold FPR protocol
    #[command(subcommand)]
    Perturb(perturb::PerturbCommand),
    /// Epoch or training-size ablation on the toy language model
    Ablate(ablate::AblateArgs),
    /// Synthetic corpora and the toy language model
    #[command(subcommand)]
    Toylm(toylm::ToylmCommand),
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // the builder is configured explicitly; no environment variables are read
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let workers = cli.workers.or(file.workers()?);
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    match cli.command {
        Command::Score(a) => score::run(a, &file),
        Command::Eval(a) => eval::run(a, &file),
        Command::Ngram(c) => ngram::run(c, &file),
        Command::Benchmark(c) => bench::run(c, &file),
        Command::Perturb(c) => perturb::run(c, &file),
        Command::Ablate(a) => ablate::run(a, &file),
        Command::Toylm(c) => toylm::run(c, &file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let err = CliError::Usage(e.kind().to_string());
            let detail = e.to_string();
            err.report_with_detail(detail.lines().next().unwrap_or_default());
            return err.exit_code();
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            e.exit_code()
        }
    }
}
