use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use mia_core::datamodel::{read_corpus, Dataset, Label, Schema};
use mia_core::toylm::{generate_corpus, SyntheticSource, ToyLm, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::load_dataset;
use crate::config::{self, require, ConfigFile};
use crate::error::{CliError, CliResult};
use crate::output;

#[derive(Debug, Subcommand)]
pub enum ToylmCommand {
    /// Generate documents from the synthetic language
    Synth(SynthArgs),
    /// Train a count model on a corpus
    Train(TrainArgs),
    /// Fill per-token log-probs from a trained model
    Score(ScoreArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthArgs {
    /// Generated records (JSONL, unscored)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Number of documents
    #[arg(long)]
    pub docs: Option<usize>,
    /// Label of every record [default: member]
    #[arg(long)]
    pub label: Option<Label>,
    /// Document-stream seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the language itself [default: 0]
    #[arg(long)]
    pub structure_seed: Option<u64>,
    /// Probability of an alternate transition, in [0, 1] [default: 0]
    #[arg(long)]
    pub shift: Option<f64>,
    /// Record id prefix [default: doc]
    #[arg(long)]
    pub prefix: Option<String>,
    /// [default: 200]
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// [default: 120]
    #[arg(long)]
    pub min_words: Option<usize>,
    /// [default: 200]
    #[arg(long)]
    pub max_words: Option<usize>,
    /// Likely successors per word [default: 8]
    #[arg(long)]
    pub successors: Option<usize>,
    /// Probability of a uniformly random next word [default: 0.02]
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    /// JSONL of records or {"text"} documents, or a directory of text files
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Model file (JSON)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Context length + 1 [default: 3]
    #[arg(long)]
    pub order: Option<usize>,
    /// Add-lambda smoothing [default: 1]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Count multiplier [default: 1]
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Extra vocabulary, one token per line
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreArgs {
    /// Target model file
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Records to score (JSONL)
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Scored records (JSONL)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Reference model file
    #[arg(long)]
    pub reference_model: Option<PathBuf>,
    /// Write reference scores as a separate record stream here instead of
    /// inline ref_logprobs
    #[arg(long)]
    pub reference_output: Option<PathBuf>,
}

pub fn validate_config(file: &ConfigFile) -> CliResult<()> {
    file.section::<SynthArgs>(&["toylm", "synth"])?;
    file.section::<TrainArgs>(&["toylm", "train"])?;
    file.section::<ScoreArgs>(&["toylm", "score"])?;
    Ok(())
}

pub fn run(cmd: ToylmCommand, file: &ConfigFile) -> CliResult<()> {
    match cmd {
        ToylmCommand::Synth(a) => synth(config::load(a, file, &["toylm", "synth"])?),
        ToylmCommand::Train(a) => train(config::load(a, file, &["toylm", "train"])?),
        ToylmCommand::Score(a) => score(config::load(a, file, &["toylm", "score"])?),
    }
}

fn synth(mut cfg: SynthArgs) -> CliResult<()> {
    let out = require(&cfg.output, "output")?;
    let docs = require(&cfg.docs, "docs")?;
    let d = SyntheticSource::default();
    let src = SyntheticSource {
        vocab_size: *cfg.vocab_size.get_or_insert(d.vocab_size),
        min_words: *cfg.min_words.get_or_insert(d.min_words),
        max_words: *cfg.max_words.get_or_insert(d.max_words),
        successors: *cfg.successors.get_or_insert(d.successors),
        noise: *cfg.noise.get_or_insert(d.noise),
        structure_seed: *cfg.structure_seed.get_or_insert(d.structure_seed),
        seed: *cfg.seed.get_or_insert(d.seed),
        shift: *cfg.shift.get_or_insert(d.shift),
        id_prefix: cfg.prefix.get_or_insert(d.id_prefix).clone(),
    };
    let label = *cfg.label.get_or_insert(Label::Member);
    let ds = generate_corpus(&src, docs, label)?;
    let effective = config::effective("toylm synth", &cfg, &["output"])?;
    output::write_dataset(&out, &ds, &effective)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(mia_core::Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn train(mut cfg: TrainArgs) -> CliResult<()> {
    let corpus = require(&cfg.corpus, "corpus")?;
    let out = require(&cfg.output, "output")?;
    let mut tc = TrainConfig::new(
        *cfg.order.get_or_insert(3),
        *cfg.lambda.get_or_insert(1.0),
        *cfg.epochs.get_or_insert(1),
    );
    if let Some(p) = &cfg.vocab {
        let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        tc.extra_vocab = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect();
    }
    let docs = read_corpus(&corpus)?;
    let lm = ToyLm::train_texts(docs.iter().map(|d| d.text.as_str()), &tc)?;
    log::info!("trained on {} documents, vocabulary {}", docs.len(), lm.vocab_size());
    let mut buf = Vec::new();
    lm.save_json(&mut buf)?;
    output::write_bytes(&out, &buf)
}

fn load_model(path: &Path) -> CliResult<ToyLm> {
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    Ok(ToyLm::load_json(BufReader::new(f))?)
}

fn score(cfg: ScoreArgs) -> CliResult<()> {
    let model = load_model(&require(&cfg.model, "model")?)?;
    let input = require(&cfg.input, "input")?;
    let out = require(&cfg.output, "output")?;
    if cfg.reference_output.is_some() && cfg.reference_model.is_none() {
        return Err(CliError::Usage("--reference-output needs --reference-model".into()));
    }
    let reference = cfg.reference_model.as_deref().map(load_model).transpose()?;
    let ds = load_dataset(&input, Schema::Unscored)?;
    let inline_ref = reference.as_ref().filter(|_| cfg.reference_output.is_none());

    let records = ds
        .records
        .par_iter()
        .map(|r| {
            let mut r = r.clone();
            r.clear_scores();
            model.fill_scores(&mut r)?;
            if let Some(m) = inline_ref {
                m.fill_reference(&mut r)?;
            }
            Ok(r)
        })
        .collect::<mia_core::Result<Vec<_>>>()?;
    let effective = config::effective("toylm score", &cfg, &["output", "reference_output"])?;
    let scored = Dataset {
        records,
        provenance: ds.provenance.clone(),
    };
    output::write_dataset(&out, &scored, &effective)?;

    if let (Some(path), Some(m)) = (&cfg.reference_output, &reference) {
        let records = ds
            .records
            .par_iter()
            .map(|r| {
                let mut r = r.clone();
                r.clear_scores();
                m.fill_scores(&mut r)?;
                Ok(r)
            })
            .collect::<mia_core::Result<Vec<_>>>()?;
        let refs = Dataset {
            records,
            provenance: ds.provenance.clone(),
        };
        output::write_dataset(path, &refs, &effective)?;
    }
    Ok(())
}
