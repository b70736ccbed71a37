//! Directional checks on the toy language model. AUCs are bootstrap means
//! (1000 resamples, seed 0) of the LOSS-style attacks.

use mia_core::attacks::{score_dataset, AttackKind, AttackSpec, MinKParams, ScoreOptions};
use mia_core::benchmark::{shift_report, ShiftConfig, ShiftVerdict};
use mia_core::datamodel::{Dataset, Document, Label, ScoredRecord};
use mia_core::metrics::{bootstrap_eval, fpr_on_set, threshold_at_fpr, BootstrapConfig};
use mia_core::ngram::{build_index, filter_low_overlap, IndexConfig};
use mia_core::perturb::{edited_member_fpr, make_edited_members, EditSpec, DEFAULT_EDIT_FPR_TARGETS};
use mia_core::rng::derive_seed;
use mia_core::toylm::{run_ablation, AblationAxis, AblationConfig, AblationRow, SyntheticSource, ToyLm, TrainConfig};
use rand::Rng;

use crate::{ensure, Check};

fn err(e: mia_core::Error) -> String {
    e.to_string()
}

fn loss_curve(rows: &[AblationRow]) -> Vec<(u64, f64)> {
    rows.iter()
        .filter(|r| r.report.attack == "loss")
        .map(|r| (r.level, r.report.bootstrap_mean_auc))
        .collect()
}

fn show(curve: &[(u64, f64)]) -> String {
    curve
        .iter()
        .map(|(l, a)| format!("{l}: {a:.4}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn epochs() -> Check {
    let rows = run_ablation(AblationAxis::Epochs, &[1, 2, 4, 8], &AblationConfig::default()).map_err(err)?;
    let curve = loss_curve(&rows);
    ensure(curve.len() == 4, || format!("{} levels", curve.len()))?;
    ensure(curve.windows(2).all(|w| w[1].1 > w[0].1), || {
        format!("LOSS AUC not strictly increasing: {}", show(&curve))
    })?;
    Ok(format!("LOSS AUC by epochs {}", show(&curve)))
}

pub fn data_size() -> Check {
    let rows = run_ablation(
        AblationAxis::TrainSize,
        &[1_000, 10_000, 100_000],
        &AblationConfig::default(),
    )
    .map_err(err)?;
    let curve = loss_curve(&rows);
    ensure(curve.len() == 3, || format!("{} levels", curve.len()))?;
    ensure(curve[2].1 < curve[0].1, || {
        format!("LOSS AUC at 100k not below 1k: {}", show(&curve))
    })?;
    Ok(format!("LOSS AUC by training docs {}", show(&curve)))
}

/// A target model trained on 1000 documents of the default language, with
/// the first 500 as benchmark members.
struct Lab {
    src: SyntheticSource,
    train: Vec<Document>,
    lm: ToyLm,
    members: Vec<ScoredRecord>,
}

impl Lab {
    fn new() -> Result<Lab, String> {
        let src = SyntheticSource::default();
        let train: Vec<Document> = src
            .with_seed(derive_seed(0, "train", 0), "train")
            .generator()
            .map_err(err)?
            .documents(0..1000)
            .collect();
        let cfg = TrainConfig {
            extra_vocab: src.vocabulary(),
            ..TrainConfig::new(3, 1.0, 1)
        };
        let lm = ToyLm::train_texts(train.iter().map(|d| d.text.as_str()), &cfg).map_err(err)?;
        let members = train[..500]
            .iter()
            .map(|d| lm.score_record(&d.id, Label::Member, &d.text))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        Ok(Lab { src, train, lm, members })
    }

    fn stream(&self, name: &str, shift: f64, count: u64) -> Result<Vec<ScoredRecord>, String> {
        let g = self
            .src
            .with_seed(derive_seed(0, name, 0), name)
            .with_shift(shift)
            .generator()
            .map_err(err)?;
        g.documents(0..count)
            .map(|d| self.lm.score_record(&d.id, Label::Nonmember, &d.text).map_err(err))
            .collect()
    }

    fn benchmark(&self, nonmembers: &[ScoredRecord]) -> Dataset {
        Dataset::new(self.members.iter().chain(nonmembers).cloned().collect()).unwrap()
    }
}

fn headline(ds: &Dataset, kind: AttackKind) -> Result<f64, String> {
    let specs = [AttackSpec::Loss, AttackSpec::Mink(MinKParams::default())];
    let table = score_dataset(ds, &specs, &ScoreOptions::default()).map_err(err)?;
    let rep = bootstrap_eval(&table, ds, kind, &BootstrapConfig::default()).map_err(err)?;
    Ok(rep.bootstrap_mean_auc)
}

fn loss_scores(records: &[ScoredRecord]) -> Vec<f64> {
    records
        .iter()
        .map(|r| -r.target_logprobs.iter().sum::<f64>() / r.target_logprobs.len() as f64)
        .collect()
}

pub fn overlap_filter() -> Check {
    let lab = Lab::new()?;
    // unseen documents that open with a prefix of a training document
    let fresh = lab
        .src
        .with_seed(derive_seed(0, "fresh", 0), "fresh")
        .generator()
        .map_err(err)?;
    let mut r = mia_core::rng::stream(0, "splice", 0);
    let spliced = (0..500)
        .map(|i| {
            let base: Vec<&str> = lab.train[500 + i].text.split_whitespace().collect();
            let keep = (r.random::<f64>() * base.len() as f64) as usize;
            let tail = fresh.document_text(i as u64);
            let mut words = base[..keep].to_vec();
            words.extend(tail.split_whitespace().take(base.len() - keep));
            lab.lm
                .score_record(&format!("spliced-{i:03}"), Label::Nonmember, &words.join(" "))
                .map_err(err)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let idx = build_index(&lab.train, &IndexConfig::new(7)).map_err(err)?;
    let kept = filter_low_overlap(&Dataset::new(spliced.clone()).unwrap(), &idx, 0.2).map_err(err)?;
    ensure(!kept.is_empty(), || "filter kept no non-members".into())?;
    let before = lab.benchmark(&spliced);
    let after = lab.benchmark(&kept.kept.records);
    let mut parts = vec![format!("7-gram filter at 0.2 kept {}/500", kept.kept.len())];
    for kind in [AttackKind::Loss, AttackKind::Mink] {
        let (b, a) = (headline(&before, kind)?, headline(&after, kind)?);
        ensure(a > b, || format!("{kind} AUC {b:.4} -> {a:.4} did not increase"))?;
        parts.push(format!("{kind} {b:.4} -> {a:.4}"));
    }
    Ok(parts.join("; "))
}

pub fn shift() -> Check {
    let lab = Lab::new()?;
    let same = lab.stream("nonmember", 0.0, 500)?;
    let shifted = lab.stream("shifted", 1.0, 500)?;

    let idx = build_index(&lab.train[..750], &IndexConfig::new(3)).map_err(err)?;
    let heldout = Dataset::new(
        lab.train[750..]
            .iter()
            .map(|d| ScoredRecord::unscored(d.id.clone(), Label::Member, d.text.clone()))
            .collect(),
    )
    .unwrap();
    let report = shift_report(&Dataset::new(shifted.clone()).unwrap(), &heldout, &idx, &ShiftConfig::default())
        .map_err(err)?;
    ensure(report.verdict == ShiftVerdict::ShiftedLow, || {
        format!(
            "verdict {} (mean difference {:.4}, KS {:.4})",
            report.verdict, report.mean_difference, report.ks_statistic
        )
    })?;

    let base = headline(&lab.benchmark(&same), AttackKind::Loss)?;
    let temporal = headline(&lab.benchmark(&shifted), AttackKind::Loss)?;
    ensure(temporal > base, || format!("shifted AUC {temporal:.4} not above {base:.4}"))?;

    let calib = loss_scores(&shifted);
    let unshifted = loss_scores(&same);
    let mut transfer = Vec::new();
    for target in DEFAULT_EDIT_FPR_TARGETS {
        let t = threshold_at_fpr(&calib, target).map_err(err)?;
        let on_calib = fpr_on_set(&calib, &t).map_err(err)?;
        let moved = fpr_on_set(&unshifted, &t).map_err(err)?;
        ensure(moved > on_calib && moved > target, || {
            format!("target {target}: FPR {moved:.4} on unshifted vs {on_calib:.4} on calibration")
        })?;
        transfer.push(format!("{:.0}%->{:.1}%", target * 100.0, moved * 100.0));
    }
    Ok(format!(
        "verdict shifted_low (3-gram mean {:.3} vs {:.3}, KS {:.3}); LOSS AUC {temporal:.4} vs same-distribution {base:.4}; transferred FPR {}",
        report.candidate.mean,
        report.heldout.mean,
        report.ks_statistic,
        transfer.join(", ")
    ))
}

pub fn edited_members() -> Check {
    let lab = Lab::new()?;
    let nonmembers = lab.stream("nonmember", 0.0, 500)?;
    let members = Dataset::new(lab.members.clone()).unwrap();
    let member_loss = loss_scores(&lab.members);
    let nonmember_loss = loss_scores(&nonmembers);
    let mut means = Vec::new();
    for n in [1usize, 10, 25] {
        let spec = EditSpec::new(n, lab.src.vocabulary(), 0);
        ensure(spec.trials == 20, || format!("default trials {}", spec.trials))?;
        let edited = make_edited_members(&members, &spec).map_err(err)?;
        ensure(edited.len() == 500 * 20, || format!("{} edited records", edited.len()))?;
        let loss: Vec<f64> = edited
            .iter()
            .map(|r| lab.lm.mean_nll(&r.text))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        for row in edited_member_fpr(&member_loss, &nonmember_loss, &loss, &DEFAULT_EDIT_FPR_TARGETS).map_err(err)? {
            ensure(row.calibration_fpr <= row.target_fpr, || {
                format!("n={n}: calibration FPR {} above target {}", row.calibration_fpr, row.target_fpr)
            })?;
        }
        means.push((n, loss.iter().sum::<f64>() / loss.len() as f64));
    }
    ensure(means.windows(2).all(|w| w[1].1 > w[0].1), || {
        format!("edited LOSS means not increasing: {means:?}")
    })?;
    Ok(format!(
        "edited-member LOSS mean {}; calibration FPR within target at 1/5/10%",
        means
            .iter()
            .map(|(n, m)| format!("n={n}: {m:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    ))
}
