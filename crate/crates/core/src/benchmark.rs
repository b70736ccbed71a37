//! Member/non-member benchmark construction and the distribution-shift
//! diagnostic comparing candidate non-members against held-out members.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::datamodel::{Dataset, Document, Label, ScoredRecord};
use crate::error::{Error, Result};
use crate::ngram::{overlap_fraction, NgramIndex, OverlapStats, OverlapSummary, DEFAULT_BIN_WIDTH};
use crate::{rng, stats};

pub const DEFAULT_SIZE: usize = 1000;
pub const DEFAULT_MIN_WORDS: usize = 100;
pub const DEFAULT_TRUNCATE_WORDS: usize = 200;
pub const DEFAULT_SHIFT_MARGIN: f64 = 0.10;
pub const DEFAULT_KS_LEVEL: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSpec {
    /// Records sampled per class.
    pub size: usize,
    /// Documents need strictly more words than this.
    pub min_words: usize,
    pub truncate_words: usize,
    pub seed: u64,
    pub member_source: Option<String>,
    pub nonmember_source: Option<String>,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            size: DEFAULT_SIZE,
            min_words: DEFAULT_MIN_WORDS,
            truncate_words: DEFAULT_TRUNCATE_WORDS,
            seed: 0,
            member_source: None,
            nonmember_source: None,
        }
    }
}

impl BenchmarkSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: BenchmarkSpec =
            toml::from_str(s).map_err(|e| Error::invalid("benchmark spec", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::invalid("size", "must be at least 1"));
        }
        if self.truncate_words == 0 {
            return Err(Error::invalid("truncate_words", "must be at least 1"));
        }
        if self.min_words > self.truncate_words {
            return Err(Error::invalid("min_words", "must not exceed truncate_words"));
        }
        Ok(())
    }

    pub fn qualifies(&self, text: &str) -> bool {
        text.split_whitespace().nth(self.min_words).is_some()
    }
}

/// Cuts `text` after its `max_words`-th whitespace word. Whitespace inside
/// the kept span is left untouched.
pub fn truncate_words(text: &str, max_words: usize) -> &str {
    match text.split_whitespace().nth(max_words.saturating_sub(1)) {
        Some(w) if max_words > 0 => {
            let end = w.as_ptr() as usize - text.as_ptr() as usize + w.len();
            &text[..end]
        }
        _ if max_words == 0 => "",
        _ => text,
    }
}

struct PoolSample {
    docs: Vec<Document>,
    qualifying: usize,
    seen: usize,
}

/// Algorithm R over the qualifying documents; the sample is returned in pool
/// order so the output does not depend on reservoir slot layout.
fn reservoir(pool: impl IntoIterator<Item = Document>, spec: &BenchmarkSpec, name: &str) -> PoolSample {
    let mut r = rng::stream(spec.seed, name, 0);
    let mut slots: Vec<(usize, Document)> = Vec::with_capacity(spec.size);
    let mut qualifying = 0;
    let mut seen = 0;
    for doc in pool {
        seen += 1;
        if !spec.qualifies(&doc.text) {
            continue;
        }
        let position = qualifying;
        qualifying += 1;
        if slots.len() < spec.size {
            slots.push((position, doc));
        } else {
            let j = r.random_range(0..qualifying);
            if j < spec.size {
                slots[j] = (position, doc);
            }
        }
    }
    slots.sort_by_key(|(p, _)| *p);
    PoolSample {
        docs: slots.into_iter().map(|(_, d)| d).collect(),
        qualifying,
        seen,
    }
}

/// Uniformly samples `spec.size` qualifying documents from each pool and
/// truncates them to `spec.truncate_words` words.
pub fn sample_benchmark(
    member_pool: impl IntoIterator<Item = Document>,
    nonmember_pool: impl IntoIterator<Item = Document>,
    spec: &BenchmarkSpec,
) -> Result<Dataset> {
    spec.validate()?;
    let members = reservoir(member_pool, spec, "sample-member");
    let nonmembers = reservoir(nonmember_pool, spec, "sample-nonmember");
    for (pool, s) in [("member", &members), ("non-member", &nonmembers)] {
        if s.qualifying < spec.size {
            return Err(Error::invalid(
                "size",
                format!(
                    "{pool} pool has {} qualifying documents (more than {} words) of {} read; {} required",
                    s.qualifying, spec.min_words, s.seen, spec.size
                ),
            ));
        }
    }
    let to_records = |docs: Vec<Document>, label: Label| {
        docs.into_iter().map(move |d| {
            let text = truncate_words(&d.text, spec.truncate_words).to_owned();
            ScoredRecord::unscored(d.id, label, text)
        })
    };
    let records = to_records(members.docs, Label::Member)
        .chain(to_records(nonmembers.docs, Label::Nonmember))
        .collect();
    Ok(Dataset::new(records)?.with_provenance(
        "benchmark",
        json!({
            "spec": spec,
            "sampling": "uniform over qualifying documents",
            "member_pool": {"read": members.seen, "qualifying": members.qualifying},
            "nonmember_pool": {"read": nonmembers.seen, "qualifying": nonmembers.qualifying},
        }),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftVerdict {
    Comparable,
    ShiftedLow,
    ShiftedHigh,
}

impl std::fmt::Display for ShiftVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ShiftVerdict::Comparable => "comparable",
            ShiftVerdict::ShiftedLow => "shifted_low",
            ShiftVerdict::ShiftedHigh => "shifted_high",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftConfig {
    /// Minimum absolute difference of mean overlap for a shifted verdict.
    pub margin: f64,
    pub ks_level: f64,
    pub bin_width: f64,
    /// Expected n-gram length of the index, when the caller knows it.
    pub n: Option<usize>,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        ShiftConfig {
            margin: DEFAULT_SHIFT_MARGIN,
            ks_level: DEFAULT_KS_LEVEL,
            bin_width: DEFAULT_BIN_WIDTH,
            n: None,
        }
    }
}

/// `shifted_low` / `shifted_high` when the candidate mean is below / above
/// the held-out mean by more than `margin` and the KS statistic exceeds
/// `ks_level`; otherwise `comparable`.
pub fn shift_verdict(mean_difference: f64, ks_statistic: f64, cfg: &ShiftConfig) -> ShiftVerdict {
    if ks_statistic <= cfg.ks_level {
        ShiftVerdict::Comparable
    } else if mean_difference < -cfg.margin {
        ShiftVerdict::ShiftedLow
    } else if mean_difference > cfg.margin {
        ShiftVerdict::ShiftedHigh
    } else {
        ShiftVerdict::Comparable
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub n: usize,
    pub candidate: OverlapSummary,
    pub heldout: OverlapSummary,
    /// Candidate mean minus held-out mean.
    pub mean_difference: f64,
    pub ks_statistic: f64,
    pub margin: f64,
    pub ks_level: f64,
    pub verdict: ShiftVerdict,
}

fn overlaps(idx: &NgramIndex, ds: &Dataset) -> Vec<OverlapStats> {
    ds.records.par_iter().map(|r| overlap_fraction(idx, r)).collect()
}

/// Compares the overlap distribution of `candidates` with that of held-out
/// members, both measured against an index of the remaining members.
pub fn shift_report(
    candidates: &Dataset,
    heldout_members: &Dataset,
    idx: &NgramIndex,
    cfg: &ShiftConfig,
) -> Result<ShiftReport> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate set is empty".into()));
    }
    if heldout_members.is_empty() {
        return Err(Error::Empty("held-out member set is empty".into()));
    }
    if let Some(n) = cfg.n {
        if n != idx.n() {
            return Err(Error::invalid(
                "n",
                format!("index was built with n={} but n={n} was requested", idx.n()),
            ));
        }
    }
    let indexed: HashSet<&str> = idx.doc_ids().iter().map(String::as_str).collect();
    if let Some(r) = heldout_members.iter().find(|r| indexed.contains(r.id.as_str())) {
        return Err(Error::Record {
            record_id: r.id.clone(),
            message: "held-out member is part of the index; rebuild the index without it".into(),
        });
    }
    let cand = overlaps(idx, candidates);
    let held = overlaps(idx, heldout_members);
    let candidate = OverlapSummary::from_stats(&cand, cfg.bin_width)?;
    let heldout = OverlapSummary::from_stats(&held, cfg.bin_width)?;
    let ks_statistic = stats::ks_statistic(
        &OverlapSummary::fractions_sorted(&cand),
        &OverlapSummary::fractions_sorted(&held),
    );
    let mean_difference = candidate.mean - heldout.mean;
    Ok(ShiftReport {
        n: idx.n(),
        verdict: shift_verdict(mean_difference, ks_statistic, cfg),
        candidate,
        heldout,
        mean_difference,
        ks_statistic,
        margin: cfg.margin,
        ks_level: cfg.ks_level,
    })
}

impl ShiftReport {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}-gram overlap: candidates vs held-out members", self.n);
        for (name, sum) in [("candidates", &self.candidate), ("held-out", &self.heldout)] {
            let _ = writeln!(
                s,
                "{name:<11} n={:<6} mean={:.4} median={:.4} degenerate={}",
                sum.count, sum.mean, sum.median, sum.degenerate
            );
        }
        let _ = writeln!(
            s,
            "mean difference {:+.4} (margin {:.2}), KS {:.4} (level {:.2})",
            self.mean_difference, self.margin, self.ks_statistic, self.ks_level
        );
        let _ = writeln!(s, "verdict: {}", self.verdict);
        let _ = writeln!(s, "\ncandidates");
        s.push_str(&self.candidate.histogram.render_text(40));
        let _ = writeln!(s, "\nheld-out members");
        s.push_str(&self.heldout.histogram.render_text(40));
        s
    }
}

/// Members plus shifted non-members in one dataset, with the shift diagnosis
/// stored under the `shift_report` provenance key.
pub fn build_temporal_style_benchmark(
    members: &Dataset,
    shifted_nonmembers: &Dataset,
    report: &ShiftReport,
) -> Result<Dataset> {
    members.check_unique_ids()?;
    shifted_nonmembers.check_unique_ids()?;
    let ids: HashSet<&str> = members.iter().map(|r| r.id.as_str()).collect();
    if let Some(r) = shifted_nonmembers.iter().find(|r| ids.contains(r.id.as_str())) {
        return Err(Error::DuplicateId(r.id.clone()));
    }
    let records = members
        .iter()
        .chain(shifted_nonmembers.iter())
        .cloned()
        .collect();
    let mut ds = Dataset::new(records)?;
    ds.provenance = members.provenance.clone();
    ds.provenance.extend(shifted_nonmembers.provenance.clone());
    Ok(ds.with_provenance(
        "shift_report",
        serde_json::to_value(report).map_err(|e| Error::Other(e.to_string()))?,
    ))
}
