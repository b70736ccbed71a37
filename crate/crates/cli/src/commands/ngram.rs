use std::path::PathBuf;

use clap::{Args, Subcommand};
use mia_core::benchmark::{shift_report, ShiftConfig, DEFAULT_KS_LEVEL, DEFAULT_SHIFT_MARGIN};
use mia_core::datamodel::{read_corpus, Schema};
use mia_core::ngram::{
    build_index, decontaminate, filter_low_overlap, overlap_distribution, read_index, write_index,
    Backend, DeconConfig, FilterOutcome, IndexConfig, DECON_MAX_OVERLAP, DECON_N, DEFAULT_BIN_WIDTH,
    DEFAULT_SHARDS, DEFAULT_TARGET_FPR, FILTER_MAX_OVERLAP,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::load_dataset;
use crate::config::{self, require, ConfigFile};
use crate::error::{CliError, CliResult};
use crate::output;

#[derive(Debug, Subcommand)]
pub enum NgramCommand {
    /// Build an n-gram index over a training corpus
    Build(BuildArgs),
    /// Per-record overlap fractions against an index
    Overlap(OverlapArgs),
    /// Drop non-members that overlap heavily with the members
    Decon(DeconArgs),
    /// Keep only records with low overlap against an index
    Filter(FilterArgs),
    /// Compare candidate non-members with held-out members
    Shift(ShiftArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildArgs {
    /// JSONL of {"text", "id"?} objects, or a directory of text files
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Index file to write
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// N-gram length in words [default: 13]
    #[arg(long)]
    pub n: Option<usize>,
    /// bloom or exact [default: bloom]
    #[arg(long)]
    pub backend: Option<Backend>,
    /// Bloom shard count [default: 2]
    #[arg(long)]
    pub shards: Option<usize>,
    /// False-positive rate of the whole bloom index [default: 0.006, i.e. 0.6%]
    #[arg(long)]
    pub fpr: Option<f64>,
    /// N-gram insertions to size the filters for [default: counted from the corpus]
    #[arg(long)]
    pub items: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapArgs {
    /// Index file from `ngram build`
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Records to measure (JSONL)
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Per-record overlap stats (JSONL)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Write the text summary and histogram here instead of stdout
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Histogram bin width [default: 0.05]
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Fail unless the index was built with this n
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeconArgs {
    /// Member records (JSONL)
    #[arg(long)]
    pub members: Option<PathBuf>,
    /// Non-member records to decontaminate (JSONL)
    #[arg(long)]
    pub nonmembers: Option<PathBuf>,
    /// Retained non-members (JSONL)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Decontamination report (JSON) [default: <output>.report.json]
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// N-gram length in words [default: 13]
    #[arg(long)]
    pub n: Option<usize>,
    /// Largest overlap a retained non-member may have [default: 0.8]
    #[arg(long)]
    pub max_overlap: Option<f64>,
    /// bloom or exact [default: bloom]
    #[arg(long)]
    pub backend: Option<Backend>,
    /// Bloom shard count [default: 2]
    #[arg(long)]
    pub shards: Option<usize>,
    /// False-positive rate of the whole bloom index [default: 0.006, i.e. 0.6%]
    #[arg(long)]
    pub fpr: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterArgs {
    /// Index file from `ngram build`
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Records to filter (JSONL)
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Retained records (JSONL)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Largest overlap a retained record may have [default: 0.2]
    #[arg(long)]
    pub max_overlap: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftArgs {
    /// Index over the members minus the held-out ones
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Candidate non-members (JSONL)
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Held-out members (JSONL), not part of the index
    #[arg(long)]
    pub heldout: Option<PathBuf>,
    /// Shift report (JSON)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Write a text rendering of the report here
    #[arg(long)]
    pub text: Option<PathBuf>,
    /// Mean-overlap difference needed for a shifted verdict [default: 0.1]
    #[arg(long)]
    pub margin: Option<f64>,
    /// KS statistic needed for a shifted verdict [default: 0.2]
    #[arg(long)]
    pub ks_level: Option<f64>,
    /// Histogram bin width [default: 0.05]
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Fail unless the index was built with this n
    #[arg(long)]
    pub n: Option<usize>,
}

pub fn validate_config(file: &ConfigFile) -> CliResult<()> {
    file.section::<BuildArgs>(&["ngram", "build"])?;
    file.section::<OverlapArgs>(&["ngram", "overlap"])?;
    file.section::<DeconArgs>(&["ngram", "decon"])?;
    file.section::<FilterArgs>(&["ngram", "filter"])?;
    file.section::<ShiftArgs>(&["ngram", "shift"])?;
    Ok(())
}

pub fn run(cmd: NgramCommand, file: &ConfigFile) -> CliResult<()> {
    match cmd {
        NgramCommand::Build(a) => build(config::load(a, file, &["ngram", "build"])?),
        NgramCommand::Overlap(a) => overlap(config::load(a, file, &["ngram", "overlap"])?),
        NgramCommand::Decon(a) => decon(config::load(a, file, &["ngram", "decon"])?),
        NgramCommand::Filter(a) => filter(config::load(a, file, &["ngram", "filter"])?),
        NgramCommand::Shift(a) => shift(config::load(a, file, &["ngram", "shift"])?),
    }
}

fn build(mut cfg: BuildArgs) -> CliResult<()> {
    let corpus = require(&cfg.corpus, "corpus")?;
    let out = require(&cfg.output, "output")?;
    let idx_cfg = IndexConfig {
        n: *cfg.n.get_or_insert(DECON_N),
        shard_count: *cfg.shards.get_or_insert(DEFAULT_SHARDS),
        target_fpr: *cfg.fpr.get_or_insert(DEFAULT_TARGET_FPR),
        backend: *cfg.backend.get_or_insert(Backend::Bloom),
        item_count_estimate: cfg.items,
    };
    let docs = read_corpus(&corpus)?;
    let idx = build_index(&docs, &idx_cfg)?;
    log::info!(
        "indexed {} documents ({} n-gram insertions)",
        idx.doc_ids().len(),
        idx.item_count_estimate()
    );
    write_index(&idx, &out)?;
    Ok(())
}

fn check_n(expected: Option<usize>, actual: usize) -> CliResult<()> {
    match expected {
        Some(n) if n != actual => Err(CliError::Usage(format!(
            "index was built with n={actual} but n={n} was requested"
        ))),
        _ => Ok(()),
    }
}

fn overlap(mut cfg: OverlapArgs) -> CliResult<()> {
    let index = require(&cfg.index, "index")?;
    let input = require(&cfg.input, "input")?;
    let out = require(&cfg.output, "output")?;
    let bin_width = *cfg.bin_width.get_or_insert(DEFAULT_BIN_WIDTH);
    let idx = read_index(&index)?;
    check_n(cfg.n, idx.n())?;
    let ds = load_dataset(&input, Schema::Unscored)?;
    let dist = overlap_distribution(&idx, &ds, bin_width)?;
    let effective = config::effective("ngram overlap", &cfg, &["output", "summary"])?;
    output::write_jsonl_rows(
        &out,
        "mia-overlap/1",
        &effective,
        Some(("summary", json!(dist.summary))),
        &dist.per_record,
    )?;
    let s = &dist.summary;
    let mut text = format!(
        "{}-gram overlap over {} records (degenerate {}): mean {:.4}, median {:.4}\n",
        idx.n(),
        s.count,
        s.degenerate,
        s.mean,
        s.median
    );
    text.push_str(&s.histogram.render_text(40));
    output::emit_text(cfg.summary.as_deref(), &text)
}

fn outcome_report(header: String, config: &Value, o: &FilterOutcome) -> Value {
    json!({
        "header": header,
        "config": config,
        "retained": o.kept.len(),
        "removed_count": o.removed.len(),
        "retention_rate": o.retention_rate,
        "removed": o
            .removed
            .iter()
            .map(|(id, ov)| json!({"record_id": id, "overlap_fraction": ov}))
            .collect::<Vec<_>>(),
    })
}

fn decon(mut cfg: DeconArgs) -> CliResult<()> {
    let members_path = require(&cfg.members, "members")?;
    let non_path = require(&cfg.nonmembers, "nonmembers")?;
    let out = require(&cfg.output, "output")?;
    let report = cfg.report.clone().unwrap_or_else(|| {
        let mut p = out.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    let dc = DeconConfig {
        n: *cfg.n.get_or_insert(DECON_N),
        max_overlap: *cfg.max_overlap.get_or_insert(DECON_MAX_OVERLAP),
        backend: *cfg.backend.get_or_insert(Backend::Bloom),
        shard_count: *cfg.shards.get_or_insert(DEFAULT_SHARDS),
        target_fpr: *cfg.fpr.get_or_insert(DEFAULT_TARGET_FPR),
    };
    let members = load_dataset(&members_path, Schema::Unscored)?;
    let nonmembers = load_dataset(&non_path, Schema::Unscored)?;
    let outcome = decontaminate(&members, &nonmembers, &dc)?;
    let header = format!(
        "decontamination: n={}, threshold {:.2}",
        dc.n, dc.max_overlap
    );
    log::info!(
        "{header}: kept {} of {} non-members",
        outcome.kept.len(),
        nonmembers.len()
    );
    let effective = config::effective("ngram decon", &cfg, &["output", "report"])?;
    output::write_dataset(&out, &outcome.kept, &effective)?;
    output::write_json(&report, &outcome_report(header, &effective, &outcome))
}

fn filter(mut cfg: FilterArgs) -> CliResult<()> {
    let index = require(&cfg.index, "index")?;
    let input = require(&cfg.input, "input")?;
    let out = require(&cfg.output, "output")?;
    let max_overlap = *cfg.max_overlap.get_or_insert(FILTER_MAX_OVERLAP);
    let idx = read_index(&index)?;
    let ds = load_dataset(&input, Schema::Unscored)?;
    let outcome = filter_low_overlap(&ds, &idx, max_overlap)?;
    log::info!(
        "{}-gram filter at {max_overlap:.2}: kept {} of {}",
        idx.n(),
        outcome.kept.len(),
        ds.len()
    );
    let effective = config::effective("ngram filter", &cfg, &["output"])?;
    let mut kept = outcome.kept.clone();
    kept.provenance.insert(
        "filter".into(),
        json!({
            "n": idx.n(),
            "max_overlap": max_overlap,
            "retention_rate": outcome.retention_rate,
            "removed": outcome.removed.len(),
        }),
    );
    output::write_dataset(&out, &kept, &effective)
}

fn shift(mut cfg: ShiftArgs) -> CliResult<()> {
    let index = require(&cfg.index, "index")?;
    let cand_path = require(&cfg.candidates, "candidates")?;
    let held_path = require(&cfg.heldout, "heldout")?;
    let out = require(&cfg.output, "output")?;
    let sc = ShiftConfig {
        margin: *cfg.margin.get_or_insert(DEFAULT_SHIFT_MARGIN),
        ks_level: *cfg.ks_level.get_or_insert(DEFAULT_KS_LEVEL),
        bin_width: *cfg.bin_width.get_or_insert(DEFAULT_BIN_WIDTH),
        n: cfg.n,
    };
    let idx = read_index(&index)?;
    let candidates = load_dataset(&cand_path, Schema::Unscored)?;
    let heldout = load_dataset(&held_path, Schema::Unscored)?;
    let report = shift_report(&candidates, &heldout, &idx, &sc)?;
    log::info!("shift verdict: {}", report.verdict);
    let effective = config::effective("ngram shift", &cfg, &["output", "text"])?;
    output::write_json(&out, &json!({"config": effective, "report": report}))?;
    if let Some(t) = &cfg.text {
        output::write_bytes(t, report.render_text().as_bytes())?;
    }
    Ok(())
}
