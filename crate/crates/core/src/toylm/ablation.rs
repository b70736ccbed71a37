use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{ToyLm, TrainConfig};
use super::synth::{Generator, SyntheticSource};
use crate::attacks::{score_dataset, AttackSpec, MinKParams, ScoreOptions};
use crate::datamodel::{Dataset, Label, ScoredRecord};
use crate::error::{Error, Result};
use crate::metrics::{bootstrap_eval, BootstrapConfig, EvalReport};

/// Attacks computable from a toy target plus a toy reference model.
pub const ABLATION_ATTACKS: [&str; 4] = ["loss", "ref", "zlib", "mink"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    Epochs,
    TrainSize,
}

impl AblationAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationAxis::Epochs => "epochs",
            AblationAxis::TrainSize => "train_size",
        }
    }
}

impl std::fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epochs" => Ok(AblationAxis::Epochs),
            "train_size" | "train-size" => Ok(AblationAxis::TrainSize),
            other => Err(Error::invalid("axis", format!("unknown axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub order: usize,
    pub lambda: f64,
    pub epochs: u64,
    pub train_size: usize,
    /// Members are the first `members_per_class` training documents;
    /// the same number of non-members is drawn from an unseen stream.
    pub members_per_class: usize,
    pub reference_train_size: usize,
    pub mink_percent: f64,
    pub n_boot: usize,
    pub seed: u64,
    pub source: SyntheticSource,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            order: 3,
            lambda: 1.0,
            epochs: 1,
            train_size: 1000,
            members_per_class: 500,
            reference_train_size: 1000,
            mink_percent: crate::attacks::DEFAULT_MINK_PERCENT,
            n_boot: crate::metrics::DEFAULT_N_BOOT,
            seed: 0,
            source: SyntheticSource::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis: AblationAxis,
    pub level: u64,
    pub report: EvalReport,
}

impl AblationConfig {
    fn validate(&self) -> Result<()> {
        if self.members_per_class == 0 {
            return Err(Error::invalid("members_per_class", "must be at least 1"));
        }
        if self.train_size < self.members_per_class {
            return Err(Error::invalid(
                "train_size",
                format!(
                    "{} is smaller than the benchmark member count {}",
                    self.train_size, self.members_per_class
                ),
            ));
        }
        if self.reference_train_size == 0 {
            return Err(Error::invalid("reference_train_size", "must be at least 1"));
        }
        MinKParams::new(self.mink_percent)?;
        self.source.validate()
    }

    fn train_config(&self, epochs: u64) -> TrainConfig {
        TrainConfig {
            extra_vocab: self.source.vocabulary(),
            ..TrainConfig::new(self.order, self.lambda, epochs)
        }
    }

    fn stream(&self, name: &str, index: u64) -> Result<Generator> {
        let seed = crate::rng::derive_seed(self.seed, name, index);
        self.source.with_seed(seed, name).generator()
    }

    fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig {
            n_boot: self.n_boot,
            seed: self.seed,
            ..BootstrapConfig::default()
        }
    }
}

struct Fixture {
    train: Generator,
    nonmember_texts: Dataset,
    reference: ToyLm,
}

fn fixture(cfg: &AblationConfig) -> Result<Fixture> {
    cfg.validate()?;
    let train = cfg.stream("train", 0)?;
    let nonmembers = cfg.stream("nonmember", 0)?;
    let records = nonmembers
        .documents(0..cfg.members_per_class as u64)
        .map(|d| ScoredRecord::unscored(d.id, Label::Nonmember, d.text))
        .collect();
    let reference_stream = cfg.stream("reference", 0)?;
    let reference = ToyLm::train_texts(
        (0..cfg.reference_train_size as u64).map(|i| reference_stream.document_text(i)),
        &cfg.train_config(1),
    )?;
    Ok(Fixture {
        train,
        nonmember_texts: Dataset::new(records)?,
        reference,
    })
}

fn train_target(fx: &Fixture, cfg: &AblationConfig, train_size: usize, epochs: u64) -> Result<ToyLm> {
    ToyLm::train_texts(
        (0..train_size as u64).map(|i| fx.train.document_text(i)),
        &cfg.train_config(epochs),
    )
}

fn evaluate_model(fx: &Fixture, cfg: &AblationConfig, target: &ToyLm) -> Result<Vec<EvalReport>> {
    let members = fx
        .train
        .documents(0..cfg.members_per_class as u64)
        .map(|d| ScoredRecord::unscored(d.id, Label::Member, d.text));
    let mut records: Vec<ScoredRecord> =
        members.chain(fx.nonmember_texts.iter().cloned()).collect();
    records.par_iter_mut().try_for_each(|r| {
        target.fill_scores(r)?;
        fx.reference.fill_reference(r)
    })?;
    let ds = Dataset::new(records)?;
    let specs = [
        AttackSpec::Loss,
        AttackSpec::Ref,
        AttackSpec::Zlib,
        AttackSpec::Mink(MinKParams::new(cfg.mink_percent)?),
    ];
    let table = score_dataset(&ds, &specs, &ScoreOptions::default())?;
    let boot = cfg.bootstrap();
    specs
        .iter()
        .map(|s| bootstrap_eval(&table, &ds, s.kind(), &boot))
        .collect()
}

/// Trains one target at `cfg.train_size` / `cfg.epochs` and evaluates it.
pub fn evaluate_level(cfg: &AblationConfig) -> Result<Vec<EvalReport>> {
    let fx = fixture(cfg)?;
    let target = train_target(&fx, cfg, cfg.train_size, cfg.epochs)?;
    evaluate_model(&fx, cfg, &target)
}

/// One row per (level, attack), levels in the given (ascending) order.
/// The benchmark (members, non-members, reference model) is fixed across
/// levels; along the epochs axis the counts are shared and only the
/// multiplier changes.
pub fn run_ablation(axis: AblationAxis, levels: &[u64], cfg: &AblationConfig) -> Result<Vec<AblationRow>> {
    if levels.is_empty() {
        return Err(Error::invalid("levels", "at least one level is required"));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("levels", "must be strictly ascending"));
    }
    if levels[0] == 0 {
        return Err(Error::invalid("levels", "must be positive"));
    }
    if axis == AblationAxis::TrainSize && (levels[0] as usize) < cfg.members_per_class {
        return Err(Error::invalid(
            "levels",
            format!(
                "train size {} is smaller than the benchmark member count {}",
                levels[0], cfg.members_per_class
            ),
        ));
    }
    let fx = fixture(cfg)?;
    let per_level: Vec<Vec<EvalReport>> = match axis {
        AblationAxis::Epochs => {
            let base = train_target(&fx, cfg, cfg.train_size, 1)?;
            levels
                .par_iter()
                .map(|&k| evaluate_model(&fx, cfg, &base.with_epochs(k)?))
                .collect::<Result<_>>()?
        }
        AblationAxis::TrainSize => levels
            .par_iter()
            .map(|&n| {
                let target = train_target(&fx, cfg, n as usize, cfg.epochs)?;
                evaluate_model(&fx, cfg, &target)
            })
            .collect::<Result<_>>()?,
    };
    Ok(levels
        .iter()
        .zip(per_level)
        .flat_map(|(&level, reports)| {
            reports.into_iter().map(move |report| AblationRow {
                axis,
                level,
                report,
            })
        })
        .collect())
}

/// Level x attack x AUC with the bootstrap interval.
pub fn write_ablation_csv(rows: &[AblationRow], out: impl Write, comment: &[String]) -> Result<()> {
    let mut out = out;
    for line in comment {
        writeln!(out, "# {line}").map_err(|e| Error::io("<csv>", e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Other(format!("csv: {e}"));
    w.write_record([
        "axis",
        "level",
        "attack",
        "auc",
        "bootstrap_mean_auc",
        "ci95_low",
        "ci95_high",
        "tpr@1%fpr",
    ])
    .map_err(csv_err)?;
    for row in rows {
        let r = &row.report;
        let tpr = r
            .tpr_at_fpr
            .first()
            .map(|t| format!("{:.6}", t.bootstrap_mean_tpr))
            .unwrap_or_default();
        w.write_record([
            row.axis.to_string(),
            row.level.to_string(),
            r.attack.clone(),
            format!("{:.6}", r.auc),
            format!("{:.6}", r.bootstrap_mean_auc),
            format!("{:.6}", r.ci95.0),
            format!("{:.6}", r.ci95.1),
            tpr,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}
