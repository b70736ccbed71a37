use std::io::{BufRead, Write};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::datamodel::{word_tokenize, Dataset, Label, ScoredRecord};
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
const FORMAT_TAG: &str = "mia-toylm/1";
const MAX_ORDER: usize = 8;
const MAX_VOCAB: usize = u16::MAX as usize - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Context length + 1.
    pub order: usize,
    pub lambda: f64,
    /// Count multiplier standing in for repeated passes over the corpus.
    pub epochs: u64,
    /// Tokens added to the vocabulary even if the corpus never uses them.
    pub extra_vocab: Vec<String>,
}

impl TrainConfig {
    pub fn new(order: usize, lambda: f64, epochs: u64) -> Self {
        TrainConfig {
            order,
            lambda,
            epochs,
            extra_vocab: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.order == 0 || self.order > MAX_ORDER {
            return Err(Error::invalid("order", format!("must lie in 1..={MAX_ORDER}")));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        Ok(())
    }
}

/// Add-lambda smoothed n-gram model:
/// `P(w | ctx) = (k c(ctx, w) + lambda) / (k c(ctx) + lambda V)`, which is
/// uniform for contexts never seen in training. Contexts at the start of a
/// text are padded with a begin marker.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyLm {
    order: usize,
    lambda: f64,
    epochs: u64,
    vocab: Vec<String>,
    ids: FxHashMap<Box<str>, u16>,
    unk: u16,
    context_counts: FxHashMap<u128, u64>,
    continuation_counts: FxHashMap<u128, u64>,
}

/// Token ids are stored +1 so that 0 marks begin-of-text padding.
#[inline]
fn push_token(key: u128, id: u16) -> u128 {
    (key << 16) | (id as u128 + 1)
}

impl ToyLm {
    fn empty(cfg: &TrainConfig) -> Self {
        ToyLm {
            order: cfg.order,
            lambda: cfg.lambda,
            epochs: cfg.epochs,
            vocab: Vec::new(),
            ids: FxHashMap::default(),
            unk: 0,
            context_counts: FxHashMap::default(),
            continuation_counts: FxHashMap::default(),
        }
    }

    fn intern(&mut self, token: &str) -> Result<u16> {
        if let Some(&id) = self.ids.get(token) {
            return Ok(id);
        }
        if self.vocab.len() >= MAX_VOCAB {
            return Err(Error::invalid("vocab", format!("more than {MAX_VOCAB} distinct tokens")));
        }
        let id = self.vocab.len() as u16;
        self.vocab.push(token.to_owned());
        self.ids.insert(token.into(), id);
        Ok(id)
    }

    /// Trains on the text of every record in `corpus`.
    pub fn train(corpus: &Dataset, cfg: &TrainConfig) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Empty("training corpus has no records".into()));
        }
        Self::train_texts(corpus.iter().map(|r| r.text.as_str()), cfg)
    }

    /// Trains from a stream of texts without materializing the corpus.
    pub fn train_texts<I, S>(texts: I, cfg: &TrainConfig) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        cfg.validate()?;
        let mut lm = ToyLm::empty(cfg);
        for t in &cfg.extra_vocab {
            lm.intern(t)?;
        }
        let mut ids = Vec::new();
        let mut saw_token = false;
        for text in texts {
            ids.clear();
            for w in text.as_ref().split_whitespace() {
                ids.push(lm.intern(w)?);
            }
            saw_token |= !ids.is_empty();
            lm.accumulate(&ids);
        }
        if !saw_token {
            return Err(Error::Empty("empty vocabulary: corpus contains no tokens".into()));
        }
        lm.unk = lm.intern(UNK)?;
        Ok(lm)
    }

    fn accumulate(&mut self, ids: &[u16]) {
        let ctx_len = self.order - 1;
        let mask = context_mask(ctx_len);
        let mut ctx: u128 = 0;
        for &id in ids {
            *self.context_counts.entry(ctx).or_insert(0) += 1;
            *self.continuation_counts.entry(push_token(ctx, id)).or_insert(0) += 1;
            if ctx_len > 0 {
                ctx = push_token(ctx, id) & mask;
            }
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn epochs(&self) -> u64 {
        self.epochs
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Same counts and vocabulary under a different epoch multiplier.
    pub fn with_epochs(&self, epochs: u64) -> Result<Self> {
        if epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        let mut lm = self.clone();
        lm.epochs = epochs;
        Ok(lm)
    }

    fn token_id(&self, token: &str) -> u16 {
        self.ids.get(token).copied().unwrap_or(self.unk)
    }

    fn prob_ids(&self, ctx: u128, id: u16) -> f64 {
        let v = self.vocab.len() as f64;
        let c_ctx = self.context_counts.get(&ctx).copied().unwrap_or(0);
        if c_ctx == 0 {
            return 1.0 / v;
        }
        let c = self
            .continuation_counts
            .get(&push_token(ctx, id))
            .copied()
            .unwrap_or(0);
        let k = self.epochs as f64;
        (k * c as f64 + self.lambda) / (k * c_ctx as f64 + self.lambda * v)
    }

    /// `P(token | context)` where `context` holds the preceding tokens (only
    /// the last `order - 1` are used; shorter contexts are begin-padded).
    pub fn prob(&self, context: &[&str], token: &str) -> f64 {
        let ctx_len = self.order - 1;
        let start = context.len().saturating_sub(ctx_len);
        let mut ctx = 0u128;
        for t in &context[start..] {
            ctx = push_token(ctx, self.token_id(t));
        }
        self.prob_ids(ctx, self.token_id(token))
    }

    /// Natural-log probability of each whitespace token of `text`.
    pub fn score_text(&self, text: &str) -> Result<Vec<f64>> {
        let ids: Vec<u16> = text.split_whitespace().map(|w| self.token_id(w)).collect();
        if ids.is_empty() {
            return Err(Error::Empty("text has no tokens".into()));
        }
        let ctx_len = self.order - 1;
        let mask = context_mask(ctx_len);
        let mut ctx = 0u128;
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            out.push(self.prob_ids(ctx, id).ln().min(0.0));
            if ctx_len > 0 {
                ctx = push_token(ctx, id) & mask;
            }
        }
        Ok(out)
    }

    pub fn mean_nll(&self, text: &str) -> Result<f64> {
        let lps = self.score_text(text)?;
        Ok(-lps.iter().sum::<f64>() / lps.len() as f64)
    }

    /// Builds a scored record. Model tokens are the words, each after the
    /// first carrying its leading space, so their concatenation is the
    /// space-normalized text.
    pub fn score_record(&self, id: &str, label: Label, text: &str) -> Result<ScoredRecord> {
        let mut r = ScoredRecord::unscored(id, label, text);
        self.fill_scores(&mut r)?;
        Ok(r)
    }

    /// Sets `model_tokens` and `target_logprobs` on `r` from this model.
    pub fn fill_scores(&self, r: &mut ScoredRecord) -> Result<()> {
        r.target_logprobs = self.score_text(&r.text).map_err(|_| Error::Record {
            record_id: r.id.clone(),
            message: "text has no tokens".into(),
        })?;
        r.model_tokens = model_tokens(&r.text);
        Ok(())
    }

    /// Sets `ref_logprobs` on `r` from this model acting as the reference.
    pub fn fill_reference(&self, r: &mut ScoredRecord) -> Result<()> {
        r.ref_logprobs = Some(self.score_text(&r.text)?);
        Ok(())
    }

    pub fn save_json(&self, mut out: impl Write) -> Result<()> {
        let mut contexts: Vec<(String, u64)> = self
            .context_counts
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        contexts.sort_unstable();
        let mut continuations: Vec<(String, u64)> = self
            .continuation_counts
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        continuations.sort_unstable();
        let file = ModelFile {
            format: FORMAT_TAG.into(),
            order: self.order,
            lambda: self.lambda,
            epochs: self.epochs,
            vocab: self.vocab.clone(),
            contexts,
            continuations,
        };
        serde_json::to_writer(&mut out, &file).map_err(|e| Error::Other(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io("<toylm>", e))
    }

    pub fn load_json(input: impl BufRead) -> Result<Self> {
        let bad = |m: String| Error::Schema {
            line: 1,
            field: "<model>".into(),
            message: m,
        };
        let file: ModelFile = serde_json::from_reader(input).map_err(|e| bad(e.to_string()))?;
        if file.format != FORMAT_TAG {
            return Err(bad(format!("unsupported format `{}`", file.format)));
        }
        let cfg = TrainConfig::new(file.order, file.lambda, file.epochs);
        cfg.validate()?;
        let mut lm = ToyLm::empty(&cfg);
        for t in &file.vocab {
            lm.intern(t)?;
        }
        lm.unk = *lm
            .ids
            .get(UNK)
            .ok_or_else(|| bad("vocabulary lacks the unknown token".into()))?;
        let parse = |entries: Vec<(String, u64)>| -> Result<FxHashMap<u128, u64>> {
            entries
                .into_iter()
                .map(|(k, v)| k.parse::<u128>().map(|k| (k, v)).map_err(|e| bad(e.to_string())))
                .collect()
        };
        lm.context_counts = parse(file.contexts)?;
        lm.continuation_counts = parse(file.continuations)?;
        Ok(lm)
    }
}

fn context_mask(ctx_len: usize) -> u128 {
    if ctx_len == 0 {
        0
    } else if ctx_len >= 8 {
        u128::MAX
    } else {
        (1u128 << (16 * ctx_len)) - 1
    }
}

/// Whitespace words with a leading space on every word after the first.
pub fn model_tokens(text: &str) -> Vec<String> {
    word_tokenize(text)
        .into_iter()
        .enumerate()
        .map(|(i, w)| if i == 0 { w } else { format!(" {w}") })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    order: usize,
    lambda: f64,
    epochs: u64,
    vocab: Vec<String>,
    contexts: Vec<(String, u64)>,
    continuations: Vec<(String, u64)>,
}
