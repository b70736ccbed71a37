//! Lexically edited members and the FPR-at-calibrated-threshold protocol.

use std::fmt::Write as _;
use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Dataset, Label, ScoredRecord};
use crate::error::{Error, Result};
use crate::metrics::{fpr_on_set, threshold_at_fpr};
use crate::stats::{self, Histogram};
use crate::{rng, toylm};

pub const DEFAULT_TRIALS: usize = 20;
pub const DEFAULT_EDIT_FPR_TARGETS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditSpec {
    pub n_swaps: usize,
    pub trials: usize,
    /// Replacement tokens, drawn uniformly.
    pub vocab: Vec<String>,
    pub seed: u64,
}

impl EditSpec {
    pub fn new(n_swaps: usize, vocab: Vec<String>, seed: u64) -> Self {
        EditSpec {
            n_swaps,
            trials: DEFAULT_TRIALS,
            vocab,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_swaps == 0 {
            return Err(Error::invalid("n_swaps", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be at least 1"));
        }
        if self.vocab.is_empty() {
            return Err(Error::invalid("vocab", "replacement vocabulary is empty"));
        }
        Ok(())
    }
}

pub fn edited_id(source_id: &str, n_swaps: usize, trial: usize) -> String {
    format!("{source_id}#edit-n{n_swaps}-t{trial}")
}

/// Model tokens of `r`, falling back to the whitespace words (with leading
/// spaces) when the record carries none.
fn tokens_of(r: &ScoredRecord) -> Vec<String> {
    if r.model_tokens.is_empty() {
        toylm::model_tokens(&r.text)
    } else {
        r.model_tokens.clone()
    }
}

/// Leading whitespace of a token, kept on replacement so that re-derived
/// text keeps its word boundaries.
fn leading_ws(token: &str) -> &str {
    &token[..token.len() - token.trim_start().len()]
}

/// Replaces `n_swaps` distinct positions of `tokens`; returns the positions
/// in ascending order.
pub fn edit_tokens<R: Rng>(tokens: &mut [String], spec: &EditSpec, r: &mut R) -> Vec<usize> {
    let mut positions = sample(r, tokens.len(), spec.n_swaps).into_vec();
    positions.sort_unstable();
    for &p in &positions {
        let prefix = leading_ws(&tokens[p]).to_owned();
        let has_distinct = spec
            .vocab
            .iter()
            .any(|v| format!("{prefix}{}", v.trim_start()) != tokens[p]);
        if !has_distinct {
            continue;
        }
        loop {
            let v = &spec.vocab[r.random_range(0..spec.vocab.len())];
            let candidate = format!("{prefix}{}", v.trim_start());
            if candidate != tokens[p] {
                tokens[p] = candidate;
                break;
            }
        }
    }
    positions
}

/// `trials` edited copies of every member, labeled `modified`, sorted by id.
/// Scores are cleared; the text is the concatenation of the edited tokens.
pub fn make_edited_members(members: &Dataset, spec: &EditSpec) -> Result<Dataset> {
    spec.validate()?;
    if spec.vocab.iter().all(|v| v.trim().is_empty()) {
        return Err(Error::invalid("vocab", "replacement tokens are all whitespace"));
    }
    let sources: Vec<(&ScoredRecord, Vec<String>)> = members
        .iter()
        .filter(|r| r.label == Label::Member)
        .map(|r| (r, tokens_of(r)))
        .collect();
    if sources.is_empty() {
        return Err(Error::Empty("no member records to edit".into()));
    }
    if let Some((r, t)) = sources.iter().find(|(_, t)| t.len() < spec.n_swaps) {
        return Err(Error::Record {
            record_id: r.id.clone(),
            message: format!("{} tokens, fewer than n_swaps = {}", t.len(), spec.n_swaps),
        });
    }
    let mut records: Vec<ScoredRecord> = sources
        .par_iter()
        .flat_map_iter(|(r, tokens)| {
            (0..spec.trials).map(move |trial| {
                let stream_name = format!("edit:{}", r.id);
                let mut g = rng::stream(spec.seed, &stream_name, trial as u64);
                let mut edited = tokens.clone();
                edit_tokens(&mut edited, spec, &mut g);
                ScoredRecord::unscored(
                    edited_id(&r.id, spec.n_swaps, trial),
                    Label::Modified,
                    edited.concat(),
                )
            })
        })
        .collect();
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Dataset::new(records)?.with_provenance(
        "edit",
        serde_json::json!({
            "n_swaps": spec.n_swaps,
            "trials": spec.trials,
            "vocab_size": spec.vocab.len(),
            "seed": spec.seed,
        }),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditedFpr {
    pub target_fpr: f64,
    pub threshold: f64,
    /// FPR of the threshold on the calibration non-members.
    pub calibration_fpr: f64,
    pub member_tpr: f64,
    /// Fraction of modified members classified member.
    pub modified_rate: f64,
}

/// Calibrates a threshold on the non-members for each target and reports how
/// many modified members fall on the member side of it.
pub fn edited_member_fpr(
    member_scores: &[f64],
    nonmember_scores: &[f64],
    modified_scores: &[f64],
    fpr_targets: &[f64],
) -> Result<Vec<EditedFpr>> {
    for (name, s) in [
        ("member", member_scores),
        ("non-member", nonmember_scores),
        ("modified", modified_scores),
    ] {
        if s.is_empty() {
            return Err(Error::Empty(format!("no {name} scores")));
        }
    }
    fpr_targets
        .iter()
        .map(|&target| {
            let t = threshold_at_fpr(nonmember_scores, target)?;
            Ok(EditedFpr {
                target_fpr: target,
                threshold: t.value,
                calibration_fpr: fpr_on_set(nonmember_scores, &t)?,
                member_tpr: fpr_on_set(member_scores, &t)?,
                modified_rate: fpr_on_set(modified_scores, &t)?,
            })
        })
        .collect()
}

/// One row of the appendix-style table: a label (domain or attack) and the
/// result for each edit distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FprTableRow {
    pub label: String,
    pub by_swaps: Vec<(usize, Vec<EditedFpr>)>,
}

/// Wide CSV: one column per (target, n_swaps), values in percent.
pub fn write_fpr_table(rows: &[FprTableRow], out: impl Write, comment: &[String]) -> Result<()> {
    let mut out = out;
    for line in comment {
        writeln!(out, "# {line}").map_err(|e| Error::io("<csv>", e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Other(format!("csv: {e}"));
    let Some(first) = rows.first() else {
        return w.flush().map_err(|e| Error::io("<csv>", e));
    };
    let targets: Vec<f64> = first
        .by_swaps
        .first()
        .map(|(_, v)| v.iter().map(|e| e.target_fpr).collect())
        .unwrap_or_default();
    let mut header = vec!["label".to_string()];
    for t in &targets {
        for (n, _) in &first.by_swaps {
            header.push(format!("fpr{}%_n{n}", t * 100.0));
        }
    }
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![row.label.clone()];
        for k in 0..targets.len() {
            for (_, results) in &row.by_swaps {
                let v = results.get(k).ok_or_else(|| {
                    Error::invalid("fpr table", "rows disagree on the FPR targets")
                })?;
                rec.push(format!("{:.2}", v.modified_rate * 100.0));
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub name: String,
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub sets: Vec<SetSummary>,
}

/// Summary statistics and histograms over a shared set of bins.
pub fn score_distribution_summary(
    member_scores: &[f64],
    nonmember_scores: &[f64],
    modified_scores: &[f64],
    bins: usize,
) -> Result<ScoreDistribution> {
    let sets = [
        ("members", member_scores),
        ("non-members", nonmember_scores),
        ("modified", modified_scores),
    ];
    if let Some((name, _)) = sets.iter().find(|(_, s)| s.is_empty()) {
        return Err(Error::Empty(format!("no {name} scores")));
    }
    if bins == 0 {
        return Err(Error::invalid("bins", "must be at least 1"));
    }
    let all = sets.iter().flat_map(|(_, s)| s.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    });
    Ok(ScoreDistribution {
        sets: sets
            .iter()
            .map(|(name, s)| {
                let sorted = stats::sorted_copy(s);
                SetSummary {
                    name: (*name).into(),
                    count: s.len(),
                    mean: stats::mean(s),
                    std_dev: stats::std_dev(s),
                    q1: stats::quantile_sorted(&sorted, 0.25),
                    median: stats::quantile_sorted(&sorted, 0.5),
                    q3: stats::quantile_sorted(&sorted, 0.75),
                    histogram: Histogram::from_values(s, lo, hi, bins),
                }
            })
            .collect(),
    })
}

impl ScoreDistribution {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        for set in &self.sets {
            let _ = writeln!(
                s,
                "{} (n={}): mean {:.4} sd {:.4} quartiles {:.4} / {:.4} / {:.4}",
                set.name, set.count, set.mean, set.std_dev, set.q1, set.median, set.q3
            );
            s.push_str(&set.histogram.render_text(40));
            s.push('\n');
        }
        s
    }
}
