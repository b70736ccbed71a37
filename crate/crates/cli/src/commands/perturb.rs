use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use clap::{Args, Subcommand};
use mia_core::attacks::AttackKind;
use mia_core::datamodel::{word_tokenize, Dataset, Label, Schema};
use mia_core::perturb::{
    edited_member_fpr, make_edited_members, score_distribution_summary, write_fpr_table, EditSpec,
    FprTableRow, DEFAULT_EDIT_FPR_TARGETS, DEFAULT_TRIALS,
};
use serde::{Deserialize, Serialize};

use super::{load_dataset, read_score_table};
use crate::config::{self, require, ConfigFile};
use crate::error::{CliError, CliResult};
use crate::output;

#[derive(Debug, Subcommand)]
pub enum PerturbCommand {
    /// Make lexically edited copies of every member
    Edit(EditArgs),
    /// Fraction of edited members classified member at calibrated thresholds
    Fpr(FprArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditArgs {
    /// Records whose members are edited (JSONL)
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Edited records labeled modified (JSONL, unscored)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Comma-separated token swap counts, one edit set per value
    #[arg(long, value_delimiter = ',')]
    pub n_swaps: Option<Vec<usize>>,
    /// Edited copies per member and swap count [default: 20]
    #[arg(long)]
    pub trials: Option<usize>,
    /// Replacement vocabulary, one token per line [default: distinct words of the input]
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Edit seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FprArgs {
    /// Score table covering members, non-members and modified records
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Labeled records the scores belong to (JSONL)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Wide CSV, one row per attack, values in percent
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Comma-separated FPR targets [default: 0.01,0.05,0.1]
    #[arg(long, value_delimiter = ',')]
    pub fpr: Option<Vec<f64>>,
    /// Attacks to report [default: every attack in the score table]
    #[arg(long, value_delimiter = ',')]
    pub attacks: Option<Vec<AttackKind>>,
    /// Write per-set score summaries and histograms here
    #[arg(long)]
    pub distribution: Option<PathBuf>,
    /// Histogram bins for --distribution [default: 20]
    #[arg(long)]
    pub bins: Option<usize>,
}

pub fn validate_config(file: &ConfigFile) -> CliResult<()> {
    file.section::<EditArgs>(&["perturb", "edit"])?;
    file.section::<FprArgs>(&["perturb", "fpr"])?;
    Ok(())
}

pub fn run(cmd: PerturbCommand, file: &ConfigFile) -> CliResult<()> {
    match cmd {
        PerturbCommand::Edit(a) => edit(config::load(a, file, &["perturb", "edit"])?),
        PerturbCommand::Fpr(a) => fpr(config::load(a, file, &["perturb", "fpr"])?),
    }
}

fn read_vocab(path: &std::path::Path) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Core(mia_core::Error::Io {
            path: path.to_owned(),
            source: e,
        })
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

fn edit(mut cfg: EditArgs) -> CliResult<()> {
    let input = require(&cfg.input, "input")?;
    let out = require(&cfg.output, "output")?;
    let n_swaps = require(&cfg.n_swaps, "n-swaps")?;
    if n_swaps.is_empty() {
        return Err(CliError::Usage("--n-swaps needs at least one value".into()));
    }
    let trials = *cfg.trials.get_or_insert(DEFAULT_TRIALS);
    let seed = *cfg.seed.get_or_insert(0);
    let ds = load_dataset(&input, Schema::Unscored)?;
    let vocab = match &cfg.vocab {
        Some(p) => read_vocab(p)?,
        None => ds
            .iter()
            .flat_map(|r| word_tokenize(&r.text))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let mut records = Vec::new();
    let mut edits = Vec::new();
    for &n in &n_swaps {
        let spec = EditSpec {
            n_swaps: n,
            trials,
            vocab: vocab.clone(),
            seed,
        };
        let mut edited = make_edited_members(&ds, &spec)?;
        if let Some(p) = edited.provenance.remove("edit") {
            edits.push(p);
        }
        records.append(&mut edited.records);
    }
    let mut result = Dataset::new(records)?;
    result.provenance.insert("edit".into(), edits.into());
    let effective = config::effective("perturb edit", &cfg, &["output"])?;
    output::write_dataset(&out, &result, &effective)
}

/// The swap count encoded in an edited record id.
fn swaps_of(id: &str) -> Option<usize> {
    let rest = &id[id.rfind("#edit-n")? + "#edit-n".len()..];
    rest.split('-').next()?.parse().ok()
}

fn fpr(mut cfg: FprArgs) -> CliResult<()> {
    let scores_path = require(&cfg.scores, "scores")?;
    let data_path = require(&cfg.data, "data")?;
    let out = require(&cfg.output, "output")?;
    let targets = cfg
        .fpr
        .get_or_insert_with(|| DEFAULT_EDIT_FPR_TARGETS.to_vec())
        .clone();
    let table = read_score_table(&scores_path)?;
    let ds = load_dataset(&data_path, Schema::Unscored)?;
    let attacks = cfg.attacks.get_or_insert_with(|| table.attacks()).clone();
    if attacks.is_empty() {
        return Err(CliError::Usage("no attacks to report".into()));
    }
    if cfg.distribution.is_some() {
        cfg.bins.get_or_insert(20);
    }

    let mut rows = Vec::new();
    let mut text = String::new();
    for attack in attacks {
        let by_id: HashMap<&str, f64> = table
            .for_attack(attack)
            .map(|s| (s.record_id.as_str(), s.value))
            .collect();
        let mut members = Vec::new();
        let mut nonmembers = Vec::new();
        let mut modified: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in ds.iter() {
            let v = *by_id.get(r.id.as_str()).ok_or_else(|| {
                CliError::Core(mia_core::Error::MissingInput {
                    record_id: r.id.clone(),
                    attack: attack.to_string(),
                    missing: "a score in the score table".into(),
                })
            })?;
            match r.label {
                Label::Member => members.push(v),
                Label::Nonmember => nonmembers.push(v),
                Label::Modified => {
                    let n = swaps_of(&r.id).ok_or_else(|| {
                        CliError::Core(mia_core::Error::Record {
                            record_id: r.id.clone(),
                            message: "modified record id does not carry `#edit-n<swaps>-`".into(),
                        })
                    })?;
                    modified.entry(n).or_default().push(v);
                }
            }
        }
        if modified.is_empty() {
            return Err(CliError::Core(mia_core::Error::Empty(
                "no modified records in the data".into(),
            )));
        }
        let by_swaps = modified
            .iter()
            .map(|(&n, m)| Ok((n, edited_member_fpr(&members, &nonmembers, m, &targets)?)))
            .collect::<CliResult<Vec<_>>>()?;
        if let Some(bins) = cfg.bins {
            for (n, m) in &modified {
                let d = score_distribution_summary(&members, &nonmembers, m, bins)?;
                text.push_str(&format!("== {attack}, n_swaps={n}\n"));
                text.push_str(&d.render_text());
            }
        }
        rows.push(FprTableRow {
            label: attack.to_string(),
            by_swaps,
        });
    }
    let effective = config::effective("perturb fpr", &cfg, &["output", "distribution"])?;
    let mut buf = Vec::new();
    write_fpr_table(&rows, &mut buf, &output::config_comment(&effective))?;
    output::write_bytes(&out, &buf)?;
    if let Some(p) = &cfg.distribution {
        output::write_bytes(p, text.as_bytes())?;
    }
    Ok(())
}
