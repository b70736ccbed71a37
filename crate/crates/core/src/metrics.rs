//! ROC evaluation of attack scores.
//!
//! Scores use the harness-wide orientation (lower = more member-like); the
//! classifier under evaluation is "predict member iff score <= t", with
//! members as the positive class.

use std::collections::HashMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{AttackKind, ScoreTable};
use crate::datamodel::{Dataset, Label};
use crate::error::{Error, Result};
use crate::rng;
use crate::stats;

pub const DEFAULT_N_BOOT: usize = 1000;
pub const DEFAULT_FPR_TARGETS: [f64; 1] = [0.01];

fn require_nonempty(members: &[f64], nonmembers: &[f64]) -> Result<()> {
    if members.is_empty() {
        return Err(Error::Empty("no member scores".into()));
    }
    if nonmembers.is_empty() {
        return Err(Error::Empty("no non-member scores".into()));
    }
    Ok(())
}

fn check_fpr(fpr: f64) -> Result<()> {
    if !(fpr > 0.0 && fpr < 1.0) {
        return Err(Error::invalid("fpr", format!("must lie in (0, 1), got {fpr}")));
    }
    Ok(())
}

/// Mann–Whitney AUC with midranks: `P(member < nonmember) + P(tie) / 2`.
pub fn auc_roc(member_scores: &[f64], nonmember_scores: &[f64]) -> Result<f64> {
    require_nonempty(member_scores, nonmember_scores)?;
    let mut all: Vec<(f64, bool)> = member_scores
        .iter()
        .map(|&s| (s, true))
        .chain(nonmember_scores.iter().map(|&s| (s, false)))
        .collect();
    // rank by -score ascending, i.e. score descending
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut member_rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let midrank = (i + 1 + j) as f64 / 2.0;
        let members_in_group = all[i..j].iter().filter(|(_, m)| *m).count();
        member_rank_sum += midrank * members_in_group as f64;
        i = j;
    }
    let m = member_scores.len() as f64;
    let n = nonmember_scores.len() as f64;
    Ok((member_rank_sum - m * (m + 1.0) / 2.0) / (m * n))
}

/// Highest TPR over empirical ROC points whose FPR is at most `fpr`.
pub fn tpr_at_fpr(member_scores: &[f64], nonmember_scores: &[f64], fpr: f64) -> Result<f64> {
    require_nonempty(member_scores, nonmember_scores)?;
    check_fpr(fpr)?;
    Ok(tpr_at_fpr_sorted(
        &stats::sorted_copy(member_scores),
        &stats::sorted_copy(nonmember_scores),
        fpr,
    ))
}

fn tpr_at_fpr_sorted(members: &[f64], nonmembers: &[f64], fpr: f64) -> f64 {
    let (m, n) = (members.len() as f64, nonmembers.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0.0;
    while i < members.len() || j < nonmembers.len() {
        let t = match (members.get(i), nonmembers.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while i < members.len() && members[i] <= t {
            i += 1;
        }
        while j < nonmembers.len() && nonmembers[j] <= t {
            j += 1;
        }
        if j as f64 / n <= fpr {
            best = i as f64 / m;
        } else {
            break;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TprAtFpr {
    pub fpr: f64,
    /// Point estimate on the full benchmark.
    pub tpr: f64,
    pub bootstrap_mean_tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub attack: String,
    /// Point estimate on the full benchmark.
    pub auc: f64,
    pub tpr_at_fpr: Vec<TprAtFpr>,
    pub bootstrap_mean_auc: f64,
    /// Percentile interval of the bootstrap AUCs.
    pub ci95: (f64, f64),
    pub n_members: usize,
    pub n_nonmembers: usize,
    pub n_boot: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_boot: usize,
    pub seed: u64,
    pub fpr_targets: Vec<f64>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_boot: DEFAULT_N_BOOT,
            seed: 0,
            fpr_targets: DEFAULT_FPR_TARGETS.to_vec(),
        }
    }
}

const MAX_REDRAWS: usize = 10_000;

/// Bootstrap evaluation over `(score, is_member)` pairs. Each iteration
/// resamples the whole benchmark with replacement; draws that miss a class
/// entirely are redrawn from the same iteration stream.
pub fn bootstrap_labeled(
    attack: &str,
    samples: &[(f64, bool)],
    cfg: &BootstrapConfig,
) -> Result<EvalReport> {
    let members: Vec<f64> = samples.iter().filter(|s| s.1).map(|s| s.0).collect();
    let nonmembers: Vec<f64> = samples.iter().filter(|s| !s.1).map(|s| s.0).collect();
    require_nonempty(&members, &nonmembers)?;
    if cfg.n_boot == 0 {
        return Err(Error::invalid("n_boot", "must be at least 1"));
    }
    for &f in &cfg.fpr_targets {
        check_fpr(f)?;
    }

    let auc = auc_roc(&members, &nonmembers)?;
    let point_tprs: Vec<f64> = cfg
        .fpr_targets
        .iter()
        .map(|&f| tpr_at_fpr(&members, &nonmembers, f))
        .collect::<Result<_>>()?;

    let iterations: Vec<(f64, Vec<f64>)> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|it| one_bootstrap(samples, cfg, it as u64))
        .collect::<Result<_>>()?;

    let aucs: Vec<f64> = iterations.iter().map(|(a, _)| *a).collect();
    let sorted = stats::sorted_copy(&aucs);
    let tpr_at_fpr = cfg
        .fpr_targets
        .iter()
        .enumerate()
        .map(|(k, &fpr)| TprAtFpr {
            fpr,
            tpr: point_tprs[k],
            bootstrap_mean_tpr: iterations.iter().map(|(_, t)| t[k]).sum::<f64>()
                / cfg.n_boot as f64,
        })
        .collect();

    Ok(EvalReport {
        attack: attack.to_owned(),
        auc,
        tpr_at_fpr,
        bootstrap_mean_auc: stats::mean(&aucs),
        ci95: (
            stats::quantile_sorted(&sorted, 0.025),
            stats::quantile_sorted(&sorted, 0.975),
        ),
        n_members: members.len(),
        n_nonmembers: nonmembers.len(),
        n_boot: cfg.n_boot,
        seed: cfg.seed,
    })
}

fn one_bootstrap(samples: &[(f64, bool)], cfg: &BootstrapConfig, iteration: u64) -> Result<(f64, Vec<f64>)> {
    let mut rng = rng::stream(cfg.seed, "bootstrap", iteration);
    let n = samples.len();
    let mut members = Vec::with_capacity(n);
    let mut nonmembers = Vec::with_capacity(n);
    for _ in 0..MAX_REDRAWS {
        members.clear();
        nonmembers.clear();
        for _ in 0..n {
            let (s, is_member) = samples[rng.random_range(0..n)];
            if is_member {
                members.push(s);
            } else {
                nonmembers.push(s);
            }
        }
        if !members.is_empty() && !nonmembers.is_empty() {
            let auc = auc_roc(&members, &nonmembers)?;
            members.sort_by(f64::total_cmp);
            nonmembers.sort_by(f64::total_cmp);
            let tprs = cfg
                .fpr_targets
                .iter()
                .map(|&f| tpr_at_fpr_sorted(&members, &nonmembers, f))
                .collect();
            return Ok((auc, tprs));
        }
    }
    Err(Error::Other(format!(
        "bootstrap iteration {iteration}: no resample contained both classes"
    )))
}

/// Joins an attack's scores with dataset labels (members and non-members
/// only) and runs [`bootstrap_labeled`].
pub fn bootstrap_eval(
    scores: &ScoreTable,
    ds: &Dataset,
    attack: AttackKind,
    cfg: &BootstrapConfig,
) -> Result<EvalReport> {
    ds.check_evaluable()?;
    let by_id: HashMap<&str, f64> = scores
        .for_attack(attack)
        .map(|s| (s.record_id.as_str(), s.value))
        .collect();
    let mut samples = Vec::with_capacity(ds.len());
    for r in ds.iter() {
        let is_member = match r.label {
            Label::Member => true,
            Label::Nonmember => false,
            Label::Modified => continue,
        };
        let value = by_id.get(r.id.as_str()).ok_or_else(|| Error::MissingInput {
            record_id: r.id.clone(),
            attack: attack.to_string(),
            missing: "a score in the score table".into(),
        })?;
        samples.push((*value, is_member));
    }
    bootstrap_labeled(attack.as_str(), &samples, cfg)
}

/// CSV summary, one row per attack.
pub fn write_summary_csv(reports: &[EvalReport], out: impl Write, comment: &[String]) -> Result<()> {
    let mut out = out;
    for line in comment {
        writeln!(out, "# {line}").map_err(|e| Error::io("<csv>", e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Other(format!("csv: {e}"));
    let mut header = vec![
        "attack".to_string(),
        "auc".into(),
        "bootstrap_mean_auc".into(),
        "ci95_low".into(),
        "ci95_high".into(),
    ];
    let fprs: Vec<f64> = reports
        .first()
        .map(|r| r.tpr_at_fpr.iter().map(|t| t.fpr).collect())
        .unwrap_or_default();
    for f in &fprs {
        header.push(format!("tpr@{}%fpr", f * 100.0));
    }
    header.extend(["n_members".into(), "n_nonmembers".into()]);
    w.write_record(&header).map_err(csv_err)?;
    for r in reports {
        let mut row = vec![
            r.attack.clone(),
            format!("{:.6}", r.auc),
            format!("{:.6}", r.bootstrap_mean_auc),
            format!("{:.6}", r.ci95.0),
            format!("{:.6}", r.ci95.1),
        ];
        row.extend(r.tpr_at_fpr.iter().map(|t| format!("{:.6}", t.bootstrap_mean_tpr)));
        row.push(r.n_members.to_string());
        row.push(r.n_nonmembers.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub attack: String,
    /// Records with score <= value are classified member.
    pub value: f64,
    pub calibration_fpr: f64,
    /// FPR actually reached on the calibration set.
    pub achieved_fpr: f64,
    pub source_dataset: String,
}

/// Largest cutoff whose FPR on `nonmember_scores` does not exceed `fpr`.
/// Cutoffs are observed scores; when even the smallest score is too many,
/// the cutoff sits just below the minimum.
pub fn threshold_at_fpr(nonmember_scores: &[f64], fpr: f64) -> Result<Threshold> {
    if nonmember_scores.is_empty() {
        return Err(Error::Empty("no non-member scores".into()));
    }
    check_fpr(fpr)?;
    let sorted = stats::sorted_copy(nonmember_scores);
    let n = sorted.len();
    let mut value = sorted[0].next_down();
    let mut achieved = 0.0;
    let mut i = 0;
    while i < n {
        let v = sorted[i];
        let mut j = i;
        while j < n && sorted[j] == v {
            j += 1;
        }
        let rate = j as f64 / n as f64;
        if rate > fpr {
            break;
        }
        value = v;
        achieved = rate;
        i = j;
    }
    Ok(Threshold {
        attack: String::new(),
        value,
        calibration_fpr: fpr,
        achieved_fpr: achieved,
        source_dataset: String::new(),
    })
}

/// Fraction of `scores` classified member under `t`.
pub fn fpr_on_set(scores: &[f64], t: &Threshold) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("no scores".into()));
    }
    let hits = scores.iter().filter(|&&s| s <= t.value).count();
    Ok(hits as f64 / scores.len() as f64)
}
