use std::path::PathBuf;

use clap::{Args, Subcommand};
use mia_core::benchmark::{
    build_temporal_style_benchmark, sample_benchmark, BenchmarkSpec, ShiftReport, DEFAULT_MIN_WORDS,
    DEFAULT_SIZE, DEFAULT_TRUNCATE_WORDS,
};
use mia_core::datamodel::{read_corpus, Schema};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::load_dataset;
use crate::config::{self, require, ConfigFile};
use crate::error::{CliError, CliResult};
use crate::output;

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Sample a balanced member/non-member benchmark from two document pools
    Sample(SampleArgs),
    /// Combine members with shifted non-members, keeping the shift report
    Temporal(TemporalArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleArgs {
    /// Member pool: JSONL of {"text", "id"?} or a directory of text files
    #[arg(long)]
    pub members: Option<PathBuf>,
    /// Non-member pool, same formats
    #[arg(long)]
    pub nonmembers: Option<PathBuf>,
    /// Benchmark records (JSONL, unscored)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Records per class [default: 1000]
    #[arg(long)]
    pub size: Option<usize>,
    /// Documents need more than this many words [default: 100]
    #[arg(long)]
    pub min_words: Option<usize>,
    /// Sampled documents are cut to this many words [default: 200]
    #[arg(long)]
    pub truncate_words: Option<usize>,
    /// Sampling seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Free-form description of the member source, kept in provenance
    #[arg(long)]
    pub member_source: Option<String>,
    /// Free-form description of the non-member source, kept in provenance
    #[arg(long)]
    pub nonmember_source: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalArgs {
    /// Member records (JSONL)
    #[arg(long)]
    pub members: Option<PathBuf>,
    /// Shifted non-member records (JSONL)
    #[arg(long)]
    pub shifted: Option<PathBuf>,
    /// Shift report written by `ngram shift`
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Combined benchmark (JSONL)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

pub fn validate_config(file: &ConfigFile) -> CliResult<()> {
    file.section::<SampleArgs>(&["benchmark", "sample"])?;
    file.section::<TemporalArgs>(&["benchmark", "temporal"])?;
    Ok(())
}

pub fn run(cmd: BenchCommand, file: &ConfigFile) -> CliResult<()> {
    match cmd {
        BenchCommand::Sample(a) => sample(config::load(a, file, &["benchmark", "sample"])?),
        BenchCommand::Temporal(a) => temporal(config::load(a, file, &["benchmark", "temporal"])?),
    }
}

fn sample(mut cfg: SampleArgs) -> CliResult<()> {
    let members = require(&cfg.members, "members")?;
    let nonmembers = require(&cfg.nonmembers, "nonmembers")?;
    let out = require(&cfg.output, "output")?;
    let spec = BenchmarkSpec {
        size: *cfg.size.get_or_insert(DEFAULT_SIZE),
        min_words: *cfg.min_words.get_or_insert(DEFAULT_MIN_WORDS),
        truncate_words: *cfg.truncate_words.get_or_insert(DEFAULT_TRUNCATE_WORDS),
        seed: *cfg.seed.get_or_insert(0),
        member_source: cfg.member_source.clone(),
        nonmember_source: cfg.nonmember_source.clone(),
    };
    let ds = sample_benchmark(read_corpus(&members)?, read_corpus(&nonmembers)?, &spec)?;
    let effective = config::effective("benchmark sample", &cfg, &["output"])?;
    output::write_dataset(&out, &ds, &effective)
}

fn temporal(cfg: TemporalArgs) -> CliResult<()> {
    let members = load_dataset(&require(&cfg.members, "members")?, Schema::Unscored)?;
    let shifted = load_dataset(&require(&cfg.shifted, "shifted")?, Schema::Unscored)?;
    let report_path = require(&cfg.report, "report")?;
    let out = require(&cfg.output, "output")?;
    let text = std::fs::read_to_string(&report_path).map_err(|e| {
        CliError::Core(mia_core::Error::Io {
            path: report_path.clone(),
            source: e,
        })
    })?;
    let bad = |e: serde_json::Error| {
        CliError::Core(mia_core::Error::Schema {
            line: e.line(),
            field: "report".into(),
            message: format!("{}: not a shift report: {e}", report_path.display()),
        })
    };
    let v: Value = serde_json::from_str(&text).map_err(bad)?;
    let report: ShiftReport = serde_json::from_value(v.get("report").cloned().unwrap_or(v)).map_err(bad)?;
    let ds = build_temporal_style_benchmark(&members, &shifted, &report)?;
    let effective = config::effective("benchmark temporal", &cfg, &["output"])?;
    output::write_dataset(&out, &ds, &effective)
}
