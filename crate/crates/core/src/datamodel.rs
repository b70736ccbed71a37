//! Record model and JSONL wire format.
//!
//! One record per line, keys in field order, optional fields omitted (a
//! `null` anywhere is a schema error). An optional first line of the form
//! `{"format":"mia-harness/1", "provenance": {...}}` carries dataset
//! provenance and is skipped by record parsing.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "mia-harness/1";

/// Tokenizer tag recorded wherever word tokens are produced.
pub const WORD_TOKENIZER_TAG: &str = "unicode-whitespace/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Member,
    Nonmember,
    /// A lexically edited member.
    Modified,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Member => "member",
            Label::Nonmember => "nonmember",
            Label::Modified => "modified",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "member" => Ok(Label::Member),
            "nonmember" => Ok(Label::Nonmember),
            "modified" => Ok(Label::Modified),
            other => Err(Error::invalid("label", format!("unknown label `{other}`"))),
        }
    }
}

/// Splits text into word tokens on Unicode whitespace, with no case folding
/// or punctuation handling.
pub fn word_tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredRecord {
    pub id: String,
    pub label: Label,
    pub text: String,
    pub word_tokens: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub model_tokens: Vec<String>,
    /// Natural-log probability of each model token given its prefix. Empty
    /// for records that have not been scored yet.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub target_logprobs: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ref_logprobs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neighbor_logprobs: Option<Vec<Vec<f64>>>,
}

impl ScoredRecord {
    /// A record with text and word tokens but no model scores.
    pub fn unscored(id: impl Into<String>, label: Label, text: impl Into<String>) -> Self {
        let text = text.into();
        ScoredRecord {
            id: id.into(),
            label,
            word_tokens: word_tokenize(&text),
            text,
            model_tokens: Vec::new(),
            target_logprobs: Vec::new(),
            ref_logprobs: None,
            neighbor_logprobs: None,
        }
    }

    pub fn is_scored(&self) -> bool {
        !self.target_logprobs.is_empty()
    }

    /// Drops every model-derived field.
    pub fn clear_scores(&mut self) {
        self.model_tokens.clear();
        self.target_logprobs.clear();
        self.ref_logprobs = None;
        self.neighbor_logprobs = None;
    }

    /// Checks every record invariant. `require_scores` additionally demands a
    /// non-empty `target_logprobs`.
    pub fn validate(&self, require_scores: bool) -> Result<()> {
        let err = |message: String| Error::Record {
            record_id: self.id.clone(),
            message,
        };
        if self.id.is_empty() {
            return Err(err("empty id".into()));
        }
        if self.word_tokens != word_tokenize(&self.text) {
            return Err(err(
                "word_tokens does not match whitespace tokenization of text".into(),
            ));
        }
        if require_scores && self.target_logprobs.is_empty() {
            return Err(err("target_logprobs is empty".into()));
        }
        if !self.target_logprobs.is_empty()
            && !self.model_tokens.is_empty()
            && self.model_tokens.len() != self.target_logprobs.len()
        {
            return Err(err(format!(
                "length mismatch: {} model_tokens vs {} target_logprobs",
                self.model_tokens.len(),
                self.target_logprobs.len()
            )));
        }
        check_logprobs(&self.target_logprobs).map_err(|m| err(format!("target_logprobs: {m}")))?;
        if let Some(r) = &self.ref_logprobs {
            if r.len() != self.target_logprobs.len() {
                return Err(err(format!(
                    "length mismatch: {} ref_logprobs vs {} target_logprobs",
                    r.len(),
                    self.target_logprobs.len()
                )));
            }
            check_logprobs(r).map_err(|m| err(format!("ref_logprobs: {m}")))?;
        }
        if let Some(ns) = &self.neighbor_logprobs {
            for (i, n) in ns.iter().enumerate() {
                if n.is_empty() {
                    return Err(err(format!("neighbor_logprobs[{i}] is empty")));
                }
                check_logprobs(n).map_err(|m| err(format!("neighbor_logprobs[{i}]: {m}")))?;
            }
        }
        Ok(())
    }
}

fn check_logprobs(values: &[f64]) -> std::result::Result<(), String> {
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(format!("non-finite log-prob at index {i}"));
        }
        if v > 0.0 {
            return Err(format!("positive log-prob {v} at index {i}"));
        }
    }
    Ok(())
}

/// Whether loaded records must carry target log-probs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Scored,
    /// Text-only records (benchmark samples, edited members awaiting scoring).
    Unscored,
}

pub type Provenance = BTreeMap<String, Value>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<ScoredRecord>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Builds a dataset, rejecting duplicate ids.
    pub fn new(records: Vec<ScoredRecord>) -> Result<Self> {
        let ds = Dataset {
            records,
            provenance: Provenance::new(),
        };
        ds.check_unique_ids()?;
        Ok(ds)
    }

    pub fn with_provenance(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.provenance.insert(key.into(), value.into());
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ScoredRecord> {
        self.records.iter()
    }

    pub fn with_label(&self, label: Label) -> impl Iterator<Item = &ScoredRecord> {
        self.records.iter().filter(move |r| r.label == label)
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.with_label(label).count()
    }

    pub fn get(&self, id: &str) -> Option<&ScoredRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.records.len());
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(())
    }

    /// Evaluation needs at least one member and one non-member.
    pub fn check_evaluable(&self) -> Result<()> {
        if self.count_label(Label::Member) == 0 {
            return Err(Error::Empty("dataset has no members".into()));
        }
        if self.count_label(Label::Nonmember) == 0 {
            return Err(Error::Empty("dataset has no non-members".into()));
        }
        Ok(())
    }

    /// Returns a dataset holding only records for which `keep` is true.
    pub fn filtered(&self, mut keep: impl FnMut(&ScoredRecord) -> bool) -> Dataset {
        Dataset {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            provenance: self.provenance.clone(),
        }
    }
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    load_jsonl_with(path, Schema::Scored)
}

pub fn load_jsonl_with(path: impl AsRef<Path>, schema: Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(file), schema).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses JSONL from any reader. Line numbers in errors are 1-based.
pub fn read_jsonl(reader: impl BufRead, schema: Schema) -> Result<Dataset> {
    let lines: Vec<(usize, String)> = reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)))
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io("<input>", e))?;

    let mut provenance = Provenance::new();
    let mut body = lines.as_slice();
    if let Some(pos) = body.iter().position(|(_, l)| !l.trim().is_empty()) {
        let (line_no, first) = &body[pos];
        if let Some(p) = parse_header(*line_no, first)? {
            provenance = p;
            body = &body[pos + 1..];
        }
    }

    let parsed: Vec<Result<Option<ScoredRecord>>> = body
        .par_iter()
        .map(|(line_no, line)| {
            if line.trim().is_empty() {
                return Ok(None);
            }
            parse_record(*line_no, line, schema).map(Some)
        })
        .collect();

    let mut records = Vec::with_capacity(parsed.len());
    for r in parsed {
        if let Some(rec) = r? {
            records.push(rec);
        }
    }
    let mut ds = Dataset::new(records)?;
    ds.provenance = provenance;
    Ok(ds)
}

fn parse_header(line_no: usize, line: &str) -> Result<Option<Provenance>> {
    let value: Value = serde_json::from_str(line).map_err(|e| schema_err(line_no, "<line>", e))?;
    let Some(obj) = value.as_object() else {
        return Ok(None);
    };
    let Some(format) = obj.get("format") else {
        return Ok(None);
    };
    if format.as_str() != Some(FORMAT_TAG) {
        return Err(schema_err(
            line_no,
            "format",
            format!("unsupported format {format}, expected \"{FORMAT_TAG}\""),
        ));
    }
    let mut provenance = Provenance::new();
    for (k, v) in obj {
        match k.as_str() {
            "format" => {}
            "provenance" => match v {
                Value::Object(m) => {
                    provenance.extend(m.iter().map(|(k, v)| (k.clone(), v.clone())));
                }
                _ => return Err(schema_err(line_no, "provenance", "expected an object")),
            },
            other => return Err(schema_err(line_no, other, "unknown header key")),
        }
    }
    Ok(Some(provenance))
}

fn schema_err(line: usize, field: &str, message: impl ToString) -> Error {
    Error::Schema {
        line,
        field: field.to_owned(),
        message: message.to_string(),
    }
}

const RECORD_KEYS: [&str; 8] = [
    "id",
    "label",
    "text",
    "word_tokens",
    "model_tokens",
    "target_logprobs",
    "ref_logprobs",
    "neighbor_logprobs",
];

fn parse_record(line_no: usize, line: &str, schema: Schema) -> Result<ScoredRecord> {
    let value: Value = serde_json::from_str(line).map_err(|e| schema_err(line_no, "<line>", e))?;
    let Value::Object(obj) = value else {
        return Err(schema_err(line_no, "<line>", "expected a JSON object"));
    };
    for (k, v) in &obj {
        if !RECORD_KEYS.contains(&k.as_str()) {
            return Err(schema_err(line_no, k, "unknown field"));
        }
        if v.is_null() {
            return Err(schema_err(line_no, k, "null is not allowed; omit the field"));
        }
    }
    let fields = Fields { obj: &obj, line_no };

    let id = fields.string("id")?;
    let label: Label = fields
        .string("label")?
        .parse()
        .map_err(|e: Error| schema_err(line_no, "label", e))?;
    let text = fields.string("text")?;
    let word_tokens = fields
        .strings("word_tokens")?
        .ok_or_else(|| schema_err(line_no, "word_tokens", "missing field"))?;
    let model_tokens = fields.strings("model_tokens")?.unwrap_or_default();
    let target_logprobs = match fields.reals("target_logprobs")? {
        Some(v) => v,
        None if schema == Schema::Unscored => Vec::new(),
        None => return Err(schema_err(line_no, "target_logprobs", "missing field")),
    };
    if schema == Schema::Scored && !obj.contains_key("model_tokens") {
        return Err(schema_err(line_no, "model_tokens", "missing field"));
    }
    let ref_logprobs = fields.reals("ref_logprobs")?;
    let neighbor_logprobs = match obj.get("neighbor_logprobs") {
        None => None,
        Some(Value::Array(items)) => Some(
            items
                .iter()
                .map(|inner| real_array(inner).ok_or(()))
                .collect::<std::result::Result<Vec<_>, ()>>()
                .map_err(|_| {
                    schema_err(line_no, "neighbor_logprobs", "expected an array of number arrays")
                })?,
        ),
        Some(_) => {
            return Err(schema_err(
                line_no,
                "neighbor_logprobs",
                "expected an array of number arrays",
            ))
        }
    };

    let record = ScoredRecord {
        id,
        label,
        text,
        word_tokens,
        model_tokens,
        target_logprobs,
        ref_logprobs,
        neighbor_logprobs,
    };
    record
        .validate(schema == Schema::Scored)
        .map_err(|e| match e {
            Error::Record { message, .. } => {
                let field = RECORD_KEYS
                    .iter()
                    .rev()
                    .find(|k| message.contains(*k))
                    .copied()
                    .unwrap_or("<record>");
                schema_err(line_no, field, message)
            }
            other => other,
        })?;
    Ok(record)
}

struct Fields<'a> {
    obj: &'a Map<String, Value>,
    line_no: usize,
}

impl Fields<'_> {
    fn string(&self, key: &str) -> Result<String> {
        match self.obj.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(schema_err(self.line_no, key, "expected a string")),
            None => Err(schema_err(self.line_no, key, "missing field")),
        }
    }

    fn strings(&self, key: &str) -> Result<Option<Vec<String>>> {
        match self.obj.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().map(str::to_owned))
                .collect::<Option<Vec<_>>>()
                .map(Some)
                .ok_or_else(|| schema_err(self.line_no, key, "expected an array of strings")),
            Some(_) => Err(schema_err(self.line_no, key, "expected an array of strings")),
        }
    }

    fn reals(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.obj.get(key) {
            None => Ok(None),
            Some(v) => real_array(v)
                .map(Some)
                .ok_or_else(|| schema_err(self.line_no, key, "expected an array of numbers")),
        }
    }
}

fn real_array(v: &Value) -> Option<Vec<f64>> {
    v.as_array()?.iter().map(Value::as_f64).collect()
}

pub fn save_jsonl(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_jsonl(ds, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_jsonl(ds: &Dataset, out: &mut impl Write) -> std::io::Result<()> {
    if !ds.provenance.is_empty() {
        let header = serde_json::json!({ "format": FORMAT_TAG, "provenance": ds.provenance });
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
    }
    for r in &ds.records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// A training-corpus document as consumed by the n-gram index and benchmark
/// sampler.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
        }
    }
}

impl From<&ScoredRecord> for Document {
    fn from(r: &ScoredRecord) -> Self {
        Document::new(r.id.clone(), r.text.clone())
    }
}

/// Reads a corpus given either a JSONL file of `{"text": ..., "id"?: ...}`
/// objects or a directory holding one plain-text document per file. Files in
/// a directory are read in sorted path order; missing ids become `doc-<i>`.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(path, e))?;
        entries.retain(|p| p.is_file());
        entries.sort();
        return entries
            .into_iter()
            .map(|p| {
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                let id = p
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok(Document { id, text })
            })
            .collect();
    }

    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| schema_err(i + 1, "<line>", e))?;
        if value.get("format").is_some() {
            continue;
        }
        let text = value
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| schema_err(i + 1, "text", "missing or not a string"))?;
        let id = match value.get("id") {
            Some(Value::String(s)) => s.clone(),
            None => format!("doc-{}", docs.len()),
            Some(_) => return Err(schema_err(i + 1, "id", "expected a string")),
        };
        docs.push(Document::new(id, text));
    }
    Ok(docs)
}
