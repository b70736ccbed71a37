//! Attack scores against brute-force recomputation. The zlib denominators
//! come from Python's `zlib.compress(text, 6)` on the same texts.

use mia_core::attacks::{score_dataset, AttackKind, AttackSpec, MinKParams, ScoreOptions};
use mia_core::datamodel::{Dataset, Label, ScoredRecord};
use rand::Rng;

use crate::{ensure, Check};

const TOL: f64 = 1e-9;

fn text(i: usize) -> String {
    let mut words: Vec<String> = (0..5 + (i * 31) % 60)
        .map(|j| format!("w{}", (i * 7919 + j * 104729) % 997))
        .collect();
    if i.is_multiple_of(7) {
        words.push("café ünïcode — ✓".into());
    }
    words.join(" ")
}

fn python_zlib_lengths() -> Vec<usize> {
    include_str!("../../../core/tests/fixtures/zlib_lengths.txt")
        .lines()
        .map(|l| l.parse().unwrap())
        .collect()
}

fn draws(r: &mut impl Rng, n: usize, coarse: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let x: f64 = r.random_range(-15.0..-0.0001);
            if coarse {
                (x * 2.0).round() / 2.0 - 0.5
            } else {
                x
            }
        })
        .collect()
}

fn fixture() -> Dataset {
    let mut r = mia_core::rng::stream(99, "acceptance-attacks", 0);
    let records = (0..1000)
        .map(|i| {
            let label = if i % 3 == 0 { Label::Nonmember } else { Label::Member };
            let mut rec = ScoredRecord::unscored(format!("a{i:04}"), label, text(i));
            let t = rec.word_tokens.len();
            rec.target_logprobs = draws(&mut r, t, i % 4 == 0);
            let rl = r.random_range(1..120);
            rec.ref_logprobs = Some(draws(&mut r, rl, false));
            let k = r.random_range(1..8);
            rec.neighbor_logprobs = Some(
                (0..k)
                    .map(|_| {
                        let len = r.random_range(1..40);
                        draws(&mut r, len, false)
                    })
                    .collect(),
            );
            rec
        })
        .collect();
    Dataset::new(records).unwrap()
}

fn mean_nll(v: &[f64]) -> f64 {
    -v.iter().sum::<f64>() / v.len() as f64
}

/// Picks the largest NLL `count` times, earliest index first on ties.
fn mink_oracle(lps: &[f64], percent: usize) -> f64 {
    let count = (percent * lps.len()).div_ceil(100).max(1);
    let mut taken = vec![false; lps.len()];
    for _ in 0..count {
        let mut best = usize::MAX;
        for i in 0..lps.len() {
            if !taken[i] && (best == usize::MAX || lps[i] < lps[best]) {
                best = i;
            }
        }
        taken[best] = true;
    }
    let chosen: Vec<f64> = (0..lps.len()).filter(|&i| taken[i]).map(|i| lps[i]).collect();
    mean_nll(&chosen)
}

pub fn check() -> Check {
    let ds = fixture();
    let zlib = python_zlib_lengths();
    let specs = [
        AttackSpec::Loss,
        AttackSpec::Ref,
        AttackSpec::Zlib,
        AttackSpec::Mink(MinKParams::new(20.0).unwrap()),
        AttackSpec::Neighborhood,
    ];
    let table = score_dataset(&ds, &specs, &ScoreOptions::default()).map_err(|e| e.to_string())?;
    let full = score_dataset(
        &ds,
        &[AttackSpec::Mink(MinKParams::new(100.0).unwrap())],
        &ScoreOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure(table.scores.len() == 5000, || format!("{} scores", table.scores.len()))?;

    let mut worst: f64 = 0.0;
    for (i, r) in ds.iter().enumerate() {
        let loss = mean_nll(&r.target_logprobs);
        let neighbors = r.neighbor_logprobs.as_ref().unwrap();
        let expected = [
            (AttackKind::Loss, loss),
            (AttackKind::Ref, loss - mean_nll(r.ref_logprobs.as_ref().unwrap())),
            (AttackKind::Zlib, loss / zlib[i] as f64),
            (AttackKind::Mink, mink_oracle(&r.target_logprobs, 20)),
            (
                AttackKind::Neighborhood,
                loss - neighbors.iter().map(|n| mean_nll(n)).sum::<f64>() / neighbors.len() as f64,
            ),
        ];
        for (kind, want) in expected {
            let s = table
                .scores
                .iter()
                .find(|s| s.record_id == r.id && s.attack == kind)
                .ok_or_else(|| format!("{} has no {kind} score", r.id))?;
            let err = (s.value - want).abs();
            worst = worst.max(err);
            ensure(err <= TOL, || format!("{} {kind}: {} vs oracle {want}", r.id, s.value))?;
            if kind == AttackKind::Zlib {
                ensure(s.params["zlib_bytes"] == zlib[i], || {
                    format!("{}: zlib length {} vs {}", r.id, s.params["zlib_bytes"], zlib[i])
                })?;
            }
        }
        let m100 = full.scores.iter().find(|s| s.record_id == r.id).unwrap();
        ensure(m100.value.to_bits() == loss_of(&table, &r.id).to_bits(), || {
            format!("{}: mink(100) {} differs from loss", r.id, m100.value)
        })?;
    }
    Ok(format!(
        "1000 records x 5 attacks within {TOL:e} (max error {worst:.2e}); zlib lengths exact; mink(100) == loss bitwise"
    ))
}

fn loss_of(table: &mia_core::attacks::ScoreTable, id: &str) -> f64 {
    table
        .scores
        .iter()
        .find(|s| s.record_id == id && s.attack == AttackKind::Loss)
        .unwrap()
        .value
}
