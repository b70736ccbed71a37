//! Word-level n-gram indices over a training corpus and per-record overlap.
//!
//! The overlap of a record with word tokens `w_1..w_m` is the fraction of its
//! `m - n + 1` stride-1 windows that occur anywhere in the indexed corpus.
//! Documents are split round-robin over shards and containment is the union
//! over shards. N-gram keys are the window's words joined by a single space
//! byte; words never contain whitespace, so the join is injective.

mod bloom;
mod persist;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bloom::{expected_fpr, optimal_bit_len, optimal_hash_count, BloomShard};
pub use persist::{read_index, write_index};

use crate::datamodel::{word_tokenize, Dataset, Document, ScoredRecord, WORD_TOKENIZER_TAG};
use crate::error::{Error, Result};
use crate::stats::{self, Histogram};
use bloom::AtomicShard;

pub const DEFAULT_SHARDS: usize = 2;
pub const DEFAULT_TARGET_FPR: f64 = 0.006;
pub const DECON_N: usize = 13;
pub const DECON_MAX_OVERLAP: f64 = 0.8;
pub const FILTER_MAX_OVERLAP: f64 = 0.2;
pub const DEFAULT_BIN_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Bloom,
    Exact,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Bloom => "bloom",
            Backend::Exact => "exact",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bloom" => Ok(Backend::Bloom),
            "exact" => Ok(Backend::Exact),
            other => Err(Error::invalid("backend", format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub n: usize,
    pub shard_count: usize,
    /// False-positive rate of the whole index (the union over shards).
    pub target_fpr: f64,
    pub backend: Backend,
    /// Total n-gram insertions to size for; counted from the corpus when unset.
    pub item_count_estimate: Option<u64>,
}

impl IndexConfig {
    pub fn new(n: usize) -> Self {
        IndexConfig {
            n,
            shard_count: DEFAULT_SHARDS,
            target_fpr: DEFAULT_TARGET_FPR,
            backend: Backend::Bloom,
            item_count_estimate: None,
        }
    }

    pub fn backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn shards(mut self, shard_count: usize) -> Self {
        self.shard_count = shard_count;
        self
    }

    /// Per-shard rate `p` such that `1 - (1 - p)^shards` equals the target.
    pub fn per_shard_fpr(&self) -> f64 {
        1.0 - (1.0 - self.target_fpr).powf(1.0 / self.shard_count as f64)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "must be at least 1"));
        }
        if self.shard_count == 0 {
            return Err(Error::invalid("shard_count", "must be at least 1"));
        }
        if !(self.target_fpr > 0.0 && self.target_fpr < 1.0) {
            return Err(Error::invalid("target_fpr", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Shards {
    Bloom(Vec<BloomShard>),
    Exact(Vec<HashSet<Box<str>>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramIndex {
    pub(crate) n: usize,
    pub(crate) shards: Shards,
    pub(crate) target_fpr: f64,
    pub(crate) item_count_estimate: u64,
    pub(crate) tokenizer_tag: String,
    /// Ids of every indexed document, in corpus order.
    pub(crate) doc_ids: Vec<String>,
}

/// Appends the key for `words` (joined by single spaces) to `buf`.
fn gram_key<S: AsRef<str>>(words: &[S], buf: &mut String) {
    buf.clear();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            buf.push(' ');
        }
        buf.push_str(w.as_ref());
    }
}

fn window_count(len: usize, n: usize) -> usize {
    (len + 1).saturating_sub(n)
}

pub fn build_index(docs: &[Document], cfg: &IndexConfig) -> Result<NgramIndex> {
    cfg.validate()?;
    if docs.is_empty() {
        return Err(Error::Empty("corpus has no documents".into()));
    }
    let shard_count = cfg.shard_count;
    let tokens: Vec<Vec<String>> = docs.par_iter().map(|d| word_tokenize(&d.text)).collect();

    let mut per_shard_windows = vec![0u64; shard_count];
    for (i, t) in tokens.iter().enumerate() {
        per_shard_windows[i % shard_count] += window_count(t.len(), cfg.n) as u64;
    }
    let total_windows: u64 = per_shard_windows.iter().sum();
    if total_windows == 0 {
        log::warn!(
            "n = {} exceeds the length of every document; the index is empty",
            cfg.n
        );
    }

    let shards = match cfg.backend {
        Backend::Bloom => {
            let per_shard_fpr = cfg.per_shard_fpr();
            let builders: Vec<AtomicShard> = (0..shard_count)
                .map(|s| {
                    let items = match cfg.item_count_estimate {
                        Some(total) => total.div_ceil(shard_count as u64),
                        None => per_shard_windows[s],
                    };
                    let bits = optimal_bit_len(items, per_shard_fpr);
                    AtomicShard::new(bits, optimal_hash_count(bits, items))
                })
                .collect();
            tokens.par_iter().enumerate().for_each(|(i, words)| {
                let shard = &builders[i % shard_count];
                let mut key = String::new();
                for w in words.windows(cfg.n) {
                    gram_key(w, &mut key);
                    shard.insert(key.as_bytes());
                }
            });
            Shards::Bloom(builders.into_iter().map(AtomicShard::freeze).collect())
        }
        Backend::Exact => Shards::Exact(
            (0..shard_count)
                .into_par_iter()
                .map(|s| {
                    let mut set = HashSet::new();
                    for words in tokens.iter().skip(s).step_by(shard_count) {
                        let mut key = String::new();
                        for w in words.windows(cfg.n) {
                            gram_key(w, &mut key);
                            if !set.contains(key.as_str()) {
                                set.insert(key.clone().into_boxed_str());
                            }
                        }
                    }
                    set
                })
                .collect(),
        ),
    };

    Ok(NgramIndex {
        n: cfg.n,
        shards,
        target_fpr: cfg.target_fpr,
        item_count_estimate: cfg.item_count_estimate.unwrap_or(total_windows),
        tokenizer_tag: WORD_TOKENIZER_TAG.to_owned(),
        doc_ids: docs.iter().map(|d| d.id.clone()).collect(),
    })
}

impl NgramIndex {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn backend(&self) -> Backend {
        match self.shards {
            Shards::Bloom(_) => Backend::Bloom,
            Shards::Exact(_) => Backend::Exact,
        }
    }

    pub fn shard_count(&self) -> usize {
        match &self.shards {
            Shards::Bloom(s) => s.len(),
            Shards::Exact(s) => s.len(),
        }
    }

    pub fn target_fpr(&self) -> f64 {
        self.target_fpr
    }

    pub fn item_count_estimate(&self) -> u64 {
        self.item_count_estimate
    }

    pub fn tokenizer_tag(&self) -> &str {
        &self.tokenizer_tag
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn bloom_shards(&self) -> Option<&[BloomShard]> {
        match &self.shards {
            Shards::Bloom(s) => Some(s),
            Shards::Exact(_) => None,
        }
    }

    /// Whether a single shard reports the gram (no union). Exposed for shard
    /// diagnostics.
    pub fn shard_contains<S: AsRef<str>>(&self, shard: usize, gram: &[S]) -> Result<bool> {
        self.check_len(gram)?;
        let mut key = String::new();
        gram_key(gram, &mut key);
        Ok(match &self.shards {
            Shards::Bloom(s) => s[shard].contains(key.as_bytes()),
            Shards::Exact(s) => s[shard].contains(key.as_str()),
        })
    }

    fn check_len<S>(&self, gram: &[S]) -> Result<()> {
        if gram.len() != self.n {
            return Err(Error::invalid(
                "gram",
                format!("expected {} words, got {}", self.n, gram.len()),
            ));
        }
        Ok(())
    }

    fn contains_key(&self, key: &str) -> bool {
        match &self.shards {
            Shards::Bloom(shards) => {
                let (h1, h2) = bloom::key_hashes(key.as_bytes());
                shards.iter().any(|s| s.contains_hashes(h1, h2))
            }
            Shards::Exact(sets) => sets.iter().any(|s| s.contains(key)),
        }
    }

    /// Union containment over shards.
    pub fn contains<S: AsRef<str>>(&self, gram: &[S]) -> Result<bool> {
        self.check_len(gram)?;
        let mut key = String::new();
        gram_key(gram, &mut key);
        Ok(self.contains_key(&key))
    }

    pub fn overlap_of_tokens<S: AsRef<str>>(&self, record_id: &str, words: &[S]) -> OverlapStats {
        let windows = window_count(words.len(), self.n);
        if windows == 0 {
            return OverlapStats {
                record_id: record_id.to_owned(),
                n: self.n,
                window_count: 0,
                hit_count: 0,
                overlap_fraction: 0.0,
                degenerate: true,
            };
        }
        let mut key = String::new();
        let mut hits = 0;
        for w in words.windows(self.n) {
            gram_key(w, &mut key);
            if self.contains_key(&key) {
                hits += 1;
            }
        }
        OverlapStats {
            record_id: record_id.to_owned(),
            n: self.n,
            window_count: windows,
            hit_count: hits,
            overlap_fraction: hits as f64 / windows as f64,
            degenerate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    pub record_id: String,
    pub n: usize,
    /// `m - n + 1`, or 0 when the record is shorter than `n` words.
    pub window_count: usize,
    pub hit_count: usize,
    pub overlap_fraction: f64,
    /// Set when the record has fewer than `n` words; the fraction is then 0.
    pub degenerate: bool,
}

pub fn overlap_fraction(idx: &NgramIndex, record: &ScoredRecord) -> OverlapStats {
    idx.overlap_of_tokens(&record.id, &record.word_tokens)
}

/// Location and shape summary of a set of overlap fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSummary {
    pub count: usize,
    pub degenerate: usize,
    pub mean: f64,
    pub median: f64,
    /// 10th, 20th, ..., 90th percentiles.
    pub deciles: Vec<f64>,
    pub histogram: Histogram,
}

impl OverlapSummary {
    pub fn from_stats(stats: &[OverlapStats], bin_width: f64) -> Result<Self> {
        if stats.is_empty() {
            return Err(Error::Empty("no records to summarize".into()));
        }
        if !(bin_width > 0.0 && bin_width <= 1.0) {
            return Err(Error::invalid("bin_width", "must lie in (0, 1]"));
        }
        let fractions: Vec<f64> = stats.iter().map(|s| s.overlap_fraction).collect();
        let sorted = stats::sorted_copy(&fractions);
        let bins = (1.0 / bin_width).round().max(1.0) as usize;
        Ok(OverlapSummary {
            count: stats.len(),
            degenerate: stats.iter().filter(|s| s.degenerate).count(),
            mean: stats::mean(&fractions),
            median: stats::quantile_sorted(&sorted, 0.5),
            deciles: (1..10)
                .map(|d| stats::quantile_sorted(&sorted, d as f64 / 10.0))
                .collect(),
            histogram: Histogram::from_values(&fractions, 0.0, 1.0, bins),
        })
    }

    pub fn fractions_sorted(stats: &[OverlapStats]) -> Vec<f64> {
        stats::sorted_copy(&stats.iter().map(|s| s.overlap_fraction).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapDistribution {
    pub per_record: Vec<OverlapStats>,
    pub summary: OverlapSummary,
}

/// Per-record overlaps (in dataset order) plus their summary.
pub fn overlap_distribution(
    idx: &NgramIndex,
    ds: &Dataset,
    bin_width: f64,
) -> Result<OverlapDistribution> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset has no records".into()));
    }
    let per_record: Vec<OverlapStats> = ds
        .records
        .par_iter()
        .map(|r| overlap_fraction(idx, r))
        .collect();
    let summary = OverlapSummary::from_stats(&per_record, bin_width)?;
    Ok(OverlapDistribution {
        per_record,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Dataset,
    /// Removed records with their overlap fraction, in dataset order.
    pub removed: Vec<(String, f64)>,
    pub retention_rate: f64,
}

impl FilterOutcome {
    /// An empty result is permitted but cannot be evaluated downstream.
    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }
}

/// Keeps records whose overlap against `idx` is at most `max_overlap`.
pub fn filter_low_overlap(nonmembers: &Dataset, idx: &NgramIndex, max_overlap: f64) -> Result<FilterOutcome> {
    if !(0.0..=1.0).contains(&max_overlap) {
        return Err(Error::invalid("max_overlap", "must lie in [0, 1]"));
    }
    let overlaps: Vec<f64> = nonmembers
        .records
        .par_iter()
        .map(|r| overlap_fraction(idx, r).overlap_fraction)
        .collect();
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (r, ov) in nonmembers.records.iter().zip(overlaps) {
        if ov <= max_overlap {
            kept.push(r.clone());
        } else {
            removed.push((r.id.clone(), ov));
        }
    }
    let retention_rate = if nonmembers.is_empty() {
        0.0
    } else {
        kept.len() as f64 / nonmembers.len() as f64
    };
    if kept.is_empty() {
        log::warn!("overlap filter at {max_overlap} retained no records");
    }
    Ok(FilterOutcome {
        kept: Dataset {
            records: kept,
            provenance: nonmembers.provenance.clone(),
        },
        removed,
        retention_rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeconConfig {
    pub n: usize,
    pub max_overlap: f64,
    pub backend: Backend,
    pub shard_count: usize,
    pub target_fpr: f64,
}

impl Default for DeconConfig {
    fn default() -> Self {
        DeconConfig {
            n: DECON_N,
            max_overlap: DECON_MAX_OVERLAP,
            backend: Backend::Bloom,
            shard_count: DEFAULT_SHARDS,
            target_fpr: DEFAULT_TARGET_FPR,
        }
    }
}

impl DeconConfig {
    pub fn index_config(&self) -> IndexConfig {
        IndexConfig {
            n: self.n,
            shard_count: self.shard_count,
            target_fpr: self.target_fpr,
            backend: self.backend,
            item_count_estimate: None,
        }
    }
}

/// Removes non-members whose n-gram overlap against the members exceeds
/// `max_overlap`.
pub fn decontaminate(members: &Dataset, nonmembers: &Dataset, cfg: &DeconConfig) -> Result<FilterOutcome> {
    if members.is_empty() {
        return Err(Error::Empty("member set is empty".into()));
    }
    let docs: Vec<Document> = members.iter().map(Document::from).collect();
    let idx = build_index(&docs, &cfg.index_config())?;
    filter_low_overlap(nonmembers, &idx, cfg.max_overlap)
}
