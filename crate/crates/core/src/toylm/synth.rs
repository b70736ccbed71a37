//! Synthetic corpora from a sparse first-order Markov source.
//!
//! Each vocabulary symbol has a fixed set of likely successors with Zipf
//! weights; with probability `noise` the next symbol is instead uniform over
//! the vocabulary. The `shift` knob routes transitions through a second,
//! independently drawn successor table, so shifted text shares the alphabet
//! but not the usual n-grams.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Dataset, Document, Label, ScoredRecord};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub vocab_size: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub successors: usize,
    pub noise: f64,
    /// Seed of the transition tables; sources sharing it share a language.
    pub structure_seed: u64,
    /// Seed of the document stream.
    pub seed: u64,
    /// Probability in [0, 1] that a transition uses the alternate table.
    pub shift: f64,
    pub id_prefix: String,
}

impl Default for SyntheticSource {
    fn default() -> Self {
        SyntheticSource {
            vocab_size: 200,
            min_words: 120,
            max_words: 200,
            successors: 8,
            noise: 0.02,
            structure_seed: 0,
            seed: 0,
            shift: 0.0,
            id_prefix: "doc".into(),
        }
    }
}

impl SyntheticSource {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || self.vocab_size > 60_000 {
            return Err(Error::invalid("vocab_size", "must lie in 2..=60000"));
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return Err(Error::invalid("min_words", "need 1 <= min_words <= max_words"));
        }
        if self.successors == 0 || self.successors > self.vocab_size {
            return Err(Error::invalid("successors", "need 1 <= successors <= vocab_size"));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::invalid("noise", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.shift) {
            return Err(Error::invalid("shift", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64, id_prefix: &str) -> Self {
        SyntheticSource {
            seed,
            id_prefix: id_prefix.to_owned(),
            ..self.clone()
        }
    }

    pub fn with_shift(&self, shift: f64) -> Self {
        SyntheticSource {
            shift,
            ..self.clone()
        }
    }

    pub fn word(id: usize) -> String {
        format!("w{id}")
    }

    /// Every symbol the source can emit.
    pub fn vocabulary(&self) -> Vec<String> {
        (0..self.vocab_size).map(Self::word).collect()
    }

    pub fn generator(&self) -> Result<Generator> {
        self.validate()?;
        let table = |name: &str| -> Vec<Vec<u32>> {
            (0..self.vocab_size)
                .map(|t| {
                    let mut r = rng::stream(self.structure_seed, name, t as u64);
                    sample(&mut r, self.vocab_size, self.successors)
                        .into_iter()
                        .map(|i| i as u32)
                        .collect()
                })
                .collect()
        };
        let mut cumulative = Vec::with_capacity(self.successors);
        let mut acc = 0.0;
        for r in 0..self.successors {
            acc += 1.0 / (r + 1) as f64;
            cumulative.push(acc);
        }
        for c in &mut cumulative {
            *c /= acc;
        }
        Ok(Generator {
            source: self.clone(),
            base: table("successors"),
            alternate: table("successors-alt"),
            cumulative,
        })
    }
}

/// Frozen transition tables of a [`SyntheticSource`].
#[derive(Debug, Clone)]
pub struct Generator {
    source: SyntheticSource,
    base: Vec<Vec<u32>>,
    alternate: Vec<Vec<u32>>,
    cumulative: Vec<f64>,
}

impl Generator {
    fn pick_successor(&self, row: &[u32], u: f64) -> u32 {
        let i = self.cumulative.partition_point(|&c| c <= u);
        row[i.min(row.len() - 1)]
    }

    /// Token ids of document `index`; depends only on (seed, index).
    pub fn document_ids(&self, index: u64) -> Vec<u32> {
        let src = &self.source;
        let mut r = rng::stream(src.seed, "document", index);
        let len = r.random_range(src.min_words..=src.max_words);
        let mut out = Vec::with_capacity(len);
        let mut cur = r.random_range(0..src.vocab_size) as u32;
        out.push(cur);
        for _ in 1..len {
            let noise: f64 = r.random();
            let which: f64 = r.random();
            let u: f64 = r.random();
            cur = if noise < src.noise {
                r.random_range(0..src.vocab_size) as u32
            } else if which < src.shift {
                self.pick_successor(&self.alternate[cur as usize], u)
            } else {
                self.pick_successor(&self.base[cur as usize], u)
            };
            out.push(cur);
        }
        out
    }

    pub fn document_text(&self, index: u64) -> String {
        let ids = self.document_ids(index);
        let mut s = String::with_capacity(ids.len() * 5);
        for (i, id) in ids.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            s.push('w');
            s.push_str(&id.to_string());
        }
        s
    }

    pub fn document_id(&self, index: u64) -> String {
        format!("{}-{index:06}", self.source.id_prefix)
    }

    pub fn document(&self, index: u64) -> Document {
        Document::new(self.document_id(index), self.document_text(index))
    }

    /// Documents `range.start..range.end` of the stream.
    pub fn documents(&self, range: std::ops::Range<u64>) -> impl Iterator<Item = Document> + '_ {
        range.map(|i| self.document(i))
    }
}

/// The first `n_docs` documents of `src` as unscored records.
pub fn generate_corpus(src: &SyntheticSource, n_docs: usize, label: Label) -> Result<Dataset> {
    let generator = src.generator()?;
    let records = generator
        .documents(0..n_docs as u64)
        .map(|d| ScoredRecord::unscored(d.id, label, d.text))
        .collect();
    Ok(Dataset::new(records)?
        .with_provenance("generator", serde_json::to_value(src).expect("source serializes")))
}
