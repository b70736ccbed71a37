//! Membership scores computed from per-token log-probabilities.
//!
//! Every score follows the same orientation: lower means more member-like.
//! `L(x; M)` below is the mean per-token negative log-likelihood.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use flate2::write::ZlibEncoder;
use flate2::Compression;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datamodel::{Dataset, ScoredRecord};
use crate::error::{Error, Result};

/// zlib level used for the compression-size denominator (the library default).
pub const ZLIB_LEVEL: u32 = 6;

pub const DEFAULT_MINK_PERCENT: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Loss,
    Ref,
    Zlib,
    Mink,
    Neighborhood,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] = [
        AttackKind::Loss,
        AttackKind::Ref,
        AttackKind::Zlib,
        AttackKind::Mink,
        AttackKind::Neighborhood,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Loss => "loss",
            AttackKind::Ref => "ref",
            AttackKind::Zlib => "zlib",
            AttackKind::Mink => "mink",
            AttackKind::Neighborhood => "neighborhood",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid("attack", format!("unknown attack `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinKParams {
    pub k_percent: f64,
}

impl MinKParams {
    pub fn new(k_percent: f64) -> Result<Self> {
        if !(k_percent > 0.0 && k_percent <= 100.0) {
            return Err(Error::invalid(
                "k_percent",
                format!("must lie in (0, 100], got {k_percent}"),
            ));
        }
        Ok(MinKParams { k_percent })
    }

    /// Number of tokens averaged for a sequence of `len` tokens.
    pub fn selection_count(&self, len: usize) -> usize {
        // multiply first: k * T is exact for integral k, so the division
        // yields an exact integer whenever the true product is one
        let c = (self.k_percent * len as f64 / 100.0).ceil() as usize;
        c.clamp(1, len.max(1))
    }
}

impl Default for MinKParams {
    fn default() -> Self {
        MinKParams {
            k_percent: DEFAULT_MINK_PERCENT,
        }
    }
}

/// A requested attack with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackSpec {
    Loss,
    Ref,
    Zlib,
    Mink(MinKParams),
    Neighborhood,
}

impl AttackSpec {
    pub fn kind(&self) -> AttackKind {
        match self {
            AttackSpec::Loss => AttackKind::Loss,
            AttackSpec::Ref => AttackKind::Ref,
            AttackSpec::Zlib => AttackKind::Zlib,
            AttackSpec::Mink(_) => AttackKind::Mink,
            AttackSpec::Neighborhood => AttackKind::Neighborhood,
        }
    }

    pub fn from_kind(kind: AttackKind, mink: MinKParams) -> Self {
        match kind {
            AttackKind::Loss => AttackSpec::Loss,
            AttackKind::Ref => AttackSpec::Ref,
            AttackKind::Zlib => AttackSpec::Zlib,
            AttackKind::Mink => AttackSpec::Mink(mink),
            AttackKind::Neighborhood => AttackSpec::Neighborhood,
        }
    }
}

pub type Params = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScore {
    pub record_id: String,
    pub attack: AttackKind,
    pub value: f64,
    pub params: Params,
}

impl AttackScore {
    fn new(record_id: &str, attack: AttackKind, value: f64, params: Params) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Record {
                record_id: record_id.to_owned(),
                message: format!("{attack} score is not finite"),
            });
        }
        Ok(AttackScore {
            record_id: record_id.to_owned(),
            attack,
            value,
            params,
        })
    }
}

/// Mean negative log-likelihood of a log-prob sequence.
pub fn mean_nll(logprobs: &[f64]) -> Option<f64> {
    if logprobs.is_empty() {
        return None;
    }
    let sum: f64 = logprobs.iter().sum();
    Some(-sum / logprobs.len() as f64)
}

fn target_nll(r: &ScoredRecord, attack: AttackKind) -> Result<f64> {
    mean_nll(&r.target_logprobs).ok_or_else(|| missing(r, attack, "non-empty target_logprobs"))
}

fn missing(r: &ScoredRecord, attack: AttackKind, what: &str) -> Error {
    Error::MissingInput {
        record_id: r.id.clone(),
        attack: attack.to_string(),
        missing: what.to_owned(),
    }
}

pub fn loss_score(r: &ScoredRecord) -> Result<AttackScore> {
    let value = target_nll(r, AttackKind::Loss)?;
    AttackScore::new(&r.id, AttackKind::Loss, value, Params::new())
}

/// `L(x; M) - L(x; M_ref)` using the record's own `ref_logprobs`.
pub fn reference_score(r: &ScoredRecord) -> Result<AttackScore> {
    let reference = r
        .ref_logprobs
        .as_deref()
        .ok_or_else(|| missing(r, AttackKind::Ref, "ref_logprobs"))?;
    reference_score_with(r, reference, "inline")
}

/// Reference score against log-probs supplied out of band, e.g. a reference
/// model's stream under its own tokenization. Only the per-sample mean is
/// compared, so the two sequences may have different lengths.
pub fn reference_score_with(
    r: &ScoredRecord,
    reference_logprobs: &[f64],
    source: &str,
) -> Result<AttackScore> {
    let target = target_nll(r, AttackKind::Ref)?;
    let reference = mean_nll(reference_logprobs)
        .ok_or_else(|| missing(r, AttackKind::Ref, "non-empty reference log-probs"))?;
    let mut params = Params::new();
    params.insert("reference".into(), source.into());
    AttackScore::new(&r.id, AttackKind::Ref, target - reference, params)
}

/// Byte length of the zlib stream for `text` at [`ZLIB_LEVEL`].
pub fn zlib_compressed_len(text: &str) -> Result<usize> {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(ZLIB_LEVEL));
    enc.write_all(text.as_bytes()).map_err(Error::Compression)?;
    Ok(enc.finish().map_err(Error::Compression)?.len())
}

pub fn zlib_score(r: &ScoredRecord) -> Result<AttackScore> {
    if r.text.is_empty() {
        return Err(missing(r, AttackKind::Zlib, "non-empty text"));
    }
    let nll = target_nll(r, AttackKind::Zlib)?;
    let compressed = zlib_compressed_len(&r.text)?;
    let mut params = Params::new();
    params.insert("zlib_bytes".into(), compressed.into());
    params.insert("zlib_level".into(), ZLIB_LEVEL.into());
    AttackScore::new(&r.id, AttackKind::Zlib, nll / compressed as f64, params)
}

/// Mean NLL over the `ceil(k% * T)` (at least one) lowest-likelihood tokens.
/// Ties at the cut are broken toward earlier tokens; the selected values are
/// summed in token order so that k = 100 reproduces the LOSS score bit for bit.
pub fn mink_score(r: &ScoredRecord, p: MinKParams) -> Result<AttackScore> {
    let p = MinKParams::new(p.k_percent)?;
    let lps = &r.target_logprobs;
    if lps.is_empty() {
        return Err(missing(r, AttackKind::Mink, "non-empty target_logprobs"));
    }
    let count = p.selection_count(lps.len());
    let mut order: Vec<usize> = (0..lps.len()).collect();
    // ascending log-prob == descending NLL
    order.sort_by(|&a, &b| lps[a].total_cmp(&lps[b]).then(a.cmp(&b)));
    let mut chosen = order[..count].to_vec();
    chosen.sort_unstable();
    let selected: Vec<f64> = chosen.iter().map(|&i| lps[i]).collect();
    let value = mean_nll(&selected).expect("count >= 1");

    let mut params = Params::new();
    params.insert("k_percent".into(), p.k_percent.into());
    params.insert("selected".into(), count.into());
    AttackScore::new(&r.id, AttackKind::Mink, value, params)
}

/// `L(x; M) - mean_i L(x~_i; M)` over the supplied neighbours.
pub fn neighborhood_score(r: &ScoredRecord) -> Result<AttackScore> {
    let neighbors = r
        .neighbor_logprobs
        .as_deref()
        .filter(|n| !n.is_empty())
        .ok_or_else(|| missing(r, AttackKind::Neighborhood, "at least one neighbor"))?;
    let target = target_nll(r, AttackKind::Neighborhood)?;
    let mut total = 0.0;
    for n in neighbors {
        total += mean_nll(n)
            .ok_or_else(|| missing(r, AttackKind::Neighborhood, "non-empty neighbor log-probs"))?;
    }
    let mut params = Params::new();
    params.insert("neighbors".into(), neighbors.len().into());
    AttackScore::new(
        &r.id,
        AttackKind::Neighborhood,
        target - total / neighbors.len() as f64,
        params,
    )
}

/// What to do when a record lacks the inputs an attack needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkipPolicy {
    #[default]
    Strict,
    Skip,
}

#[derive(Debug, Clone, Default)]
pub struct ScoreOptions<'a> {
    pub policy: SkipPolicy,
    /// Reference-model records keyed by id; overrides inline `ref_logprobs`.
    pub reference: Option<&'a Dataset>,
}

/// Scores sorted by `(record_id, attack)`, plus the pairs skipped under
/// [`SkipPolicy::Skip`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    pub scores: Vec<AttackScore>,
    pub skipped: Vec<(String, AttackKind)>,
}

pub fn score_record(
    r: &ScoredRecord,
    spec: &AttackSpec,
    reference: Option<&ScoredRecord>,
) -> Result<AttackScore> {
    match spec {
        AttackSpec::Loss => loss_score(r),
        AttackSpec::Ref => match reference {
            Some(rr) => reference_score_with(r, &rr.target_logprobs, "stream"),
            None => reference_score(r),
        },
        AttackSpec::Zlib => zlib_score(r),
        AttackSpec::Mink(p) => mink_score(r, *p),
        AttackSpec::Neighborhood => neighborhood_score(r),
    }
}

/// Scores every record under every requested attack. Runs on the ambient
/// rayon pool; output order does not depend on the pool size.
pub fn score_dataset(
    ds: &Dataset,
    attacks: &[AttackSpec],
    opts: &ScoreOptions<'_>,
) -> Result<ScoreTable> {
    for spec in attacks {
        if let AttackSpec::Mink(p) = spec {
            MinKParams::new(p.k_percent)?;
        }
    }
    let ref_index: Option<HashMap<&str, &ScoredRecord>> = opts
        .reference
        .map(|d| d.records.iter().map(|r| (r.id.as_str(), r)).collect());

    let per_record: Vec<Vec<(AttackKind, Result<AttackScore>)>> = ds
        .records
        .par_iter()
        .map(|r| {
            attacks
                .iter()
                .map(|spec| {
                    let result = match (&ref_index, spec) {
                        (Some(idx), AttackSpec::Ref) => match idx.get(r.id.as_str()) {
                            Some(rr) => score_record(r, spec, Some(rr)),
                            None => Err(missing(r, AttackKind::Ref, "a reference-stream record")),
                        },
                        _ => score_record(r, spec, None),
                    };
                    (spec.kind(), result)
                })
                .collect()
        })
        .collect();

    let mut table = ScoreTable::default();
    for (r, results) in ds.records.iter().zip(per_record) {
        for (kind, result) in results {
            match result {
                Ok(s) => table.scores.push(s),
                Err(Error::MissingInput { .. }) if opts.policy == SkipPolicy::Skip => {
                    table.skipped.push((r.id.clone(), kind))
                }
                Err(e) => return Err(e),
            }
        }
    }
    table
        .scores
        .sort_by(|a, b| a.record_id.cmp(&b.record_id).then(a.attack.cmp(&b.attack)));
    table.skipped.sort();
    Ok(table)
}

fn format_value(v: f64) -> String {
    serde_json::to_string(&v).expect("finite f64 serializes")
}

impl ScoreTable {
    pub fn for_attack(&self, attack: AttackKind) -> impl Iterator<Item = &AttackScore> {
        self.scores.iter().filter(move |s| s.attack == attack)
    }

    pub fn attacks(&self) -> Vec<AttackKind> {
        let mut kinds: Vec<AttackKind> = self.scores.iter().map(|s| s.attack).collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    /// CSV with columns `record_id,attack,value,params` (params as a JSON
    /// object). `comment` lines are written first, each prefixed with `# `.
    pub fn write_csv(&self, out: impl Write, comment: &[String]) -> Result<()> {
        let mut out = out;
        for line in comment {
            writeln!(out, "# {line}").map_err(|e| Error::io("<csv>", e))?;
        }
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Other(format!("csv: {e}"));
        w.write_record(["record_id", "attack", "value", "params"])
            .map_err(csv_err)?;
        for s in &self.scores {
            let params = serde_json::to_string(&s.params).expect("params serialize");
            w.write_record([
                s.record_id.as_str(),
                s.attack.as_str(),
                &format_value(s.value),
                &params,
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn write_jsonl(&self, mut out: impl Write, header: Option<&Value>) -> Result<()> {
        let io = |e| Error::io("<jsonl>", e);
        if let Some(h) = header {
            serde_json::to_writer(&mut out, h).map_err(|e| Error::Other(e.to_string()))?;
            out.write_all(b"\n").map_err(io)?;
        }
        for s in &self.scores {
            serde_json::to_writer(&mut out, s).map_err(|e| Error::Other(e.to_string()))?;
            out.write_all(b"\n").map_err(io)?;
        }
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<ScoreTable> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(input);
        let mut scores = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Schema {
                line,
                field: "<row>".into(),
                message: e.to_string(),
            })?;
            let field = |idx: usize, name: &str| {
                row.get(idx).ok_or_else(|| Error::Schema {
                    line,
                    field: name.into(),
                    message: "missing column".into(),
                })
            };
            let bad = |name: &str, message: String| Error::Schema {
                line,
                field: name.into(),
                message,
            };
            let record_id = field(0, "record_id")?.to_owned();
            let attack = field(1, "attack")?
                .parse()
                .map_err(|e: Error| bad("attack", e.to_string()))?;
            let value: f64 = field(2, "value")?
                .parse()
                .map_err(|e: std::num::ParseFloatError| bad("value", e.to_string()))?;
            let params: Params = serde_json::from_str(field(3, "params")?)
                .map_err(|e| bad("params", e.to_string()))?;
            scores.push(AttackScore::new(&record_id, attack, value, params)?);
        }
        Ok(ScoreTable {
            scores,
            skipped: Vec::new(),
        })
    }

    /// Reads score JSONL; lines without a `record_id` key are treated as
    /// headers and skipped.
    pub fn read_jsonl(input: impl BufRead) -> Result<ScoreTable> {
        let mut scores = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<jsonl>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(&line).map_err(|e| Error::Schema {
                line: i + 1,
                field: "<line>".into(),
                message: e.to_string(),
            })?;
            if v.get("record_id").is_none() {
                continue;
            }
            let s: AttackScore = serde_json::from_value(v).map_err(|e| Error::Schema {
                line: i + 1,
                field: "<score>".into(),
                message: e.to_string(),
            })?;
            scores.push(s);
        }
        Ok(ScoreTable {
            scores,
            skipped: Vec::new(),
        })
    }
}
