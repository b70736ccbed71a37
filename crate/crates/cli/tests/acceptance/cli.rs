//! Runs every subcommand through one pipeline with 1 and 4 workers (and 4
//! again) and requires byte-identical outputs.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use crate::{ensure, Check};

const STEPS: &[&[&str]] = &[
    &["toylm", "synth", "-o", "train.jsonl", "--docs", "300"],
    &["toylm", "synth", "-o", "non.jsonl", "--docs", "120", "--seed", "7", "--label", "nonmember", "--prefix", "non"],
    &["toylm", "synth", "-o", "refc.jsonl", "--docs", "300", "--seed", "9", "--prefix", "ref"],
    &["toylm", "synth", "-o", "held.jsonl", "--docs", "60", "--seed", "5", "--prefix", "held"],
    &["toylm", "synth", "-o", "shifted.jsonl", "--docs", "60", "--seed", "11", "--shift", "1", "--label", "nonmember", "--prefix", "sh"],
    &["toylm", "train", "--corpus", "train.jsonl", "-o", "lm.json"],
    &["toylm", "train", "--corpus", "refc.jsonl", "-o", "ref.json", "--order", "2"],
    &["benchmark", "sample", "--members", "train.jsonl", "--nonmembers", "non.jsonl", "-o", "bench.jsonl", "--size", "100", "--seed", "3"],
    &["toylm", "score", "--model", "lm.json", "--reference-model", "ref.json", "-i", "bench.jsonl", "-o", "scored.jsonl"],
    &["toylm", "score", "--model", "lm.json", "--reference-model", "ref.json", "-i", "bench.jsonl", "-o", "target.jsonl", "--reference-output", "refstream.jsonl"],
    &["score", "-i", "scored.jsonl", "-o", "scores.csv"],
    &["score", "-i", "target.jsonl", "--reference", "refstream.jsonl", "-o", "scores.jsonl", "--attacks", "loss,ref,zlib,mink"],
    &["eval", "--scores", "scores.csv", "--data", "bench.jsonl", "--output-dir", "eval", "--n-boot", "300", "--fpr", "0.01,0.1"],
    &["ngram", "build", "--corpus", "train.jsonl", "-o", "bloom.idx", "--n", "7"],
    &["ngram", "build", "--corpus", "train.jsonl", "-o", "exact.idx", "--n", "3", "--backend", "exact"],
    &["ngram", "overlap", "--index", "bloom.idx", "-i", "bench.jsonl", "-o", "overlap.jsonl", "--summary", "overlap.txt"],
    &["ngram", "decon", "--members", "train.jsonl", "--nonmembers", "non.jsonl", "-o", "decon.jsonl", "--n", "7", "--max-overlap", "0.3"],
    &["ngram", "filter", "--index", "bloom.idx", "-i", "non.jsonl", "-o", "filtered.jsonl"],
    &["ngram", "shift", "--index", "exact.idx", "--candidates", "shifted.jsonl", "--heldout", "held.jsonl", "-o", "shift.json", "--text", "shift.txt"],
    &["benchmark", "temporal", "--members", "held.jsonl", "--shifted", "shifted.jsonl", "--report", "shift.json", "-o", "temporal.jsonl"],
    &["perturb", "edit", "-i", "bench.jsonl", "-o", "edited.jsonl", "--n-swaps", "1,10", "--trials", "5", "--seed", "2"],
    &["toylm", "score", "--model", "lm.json", "-i", "with_edits.jsonl", "-o", "with_edits_scored.jsonl"],
    &["score", "-i", "with_edits_scored.jsonl", "-o", "with_edits.csv", "--attacks", "loss,zlib,mink"],
    &["perturb", "fpr", "--scores", "with_edits.csv", "--data", "with_edits.jsonl", "-o", "fpr.csv", "--distribution", "dist.txt"],
    &["ablate", "--axis", "epochs", "--levels", "1,2,4", "--n-boot", "200", "-o", "ablate.csv", "--report", "ablate.json"],
];

/// Benchmark records followed by the edited members, without the second
/// header line.
fn join_edits(dir: &Path) -> std::io::Result<()> {
    let bench = std::fs::read_to_string(dir.join("bench.jsonl"))?;
    let edited = std::fs::read_to_string(dir.join("edited.jsonl"))?;
    let mut out = bench;
    out.extend(edited.lines().skip(1).map(|l| format!("{l}\n")));
    std::fs::write(dir.join("with_edits.jsonl"), out)
}

fn run_pipeline(dir: &Path, workers: &str) -> Result<BTreeMap<String, Vec<u8>>, String> {
    for step in STEPS {
        if step[0] == "toylm" && step.contains(&"with_edits.jsonl") {
            join_edits(dir).map_err(|e| e.to_string())?;
        }
        let out = Command::new(env!("CARGO_BIN_EXE_mia"))
            .current_dir(dir)
            .arg("--workers")
            .arg(workers)
            .args(*step)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || {
            format!("`mia {}` failed: {}", step.join(" "), String::from_utf8_lossy(&out.stderr).trim())
        })?;
    }
    let mut files = BTreeMap::new();
    collect(dir, dir, &mut files).map_err(|e| e.to_string())?;
    Ok(files)
}

fn collect(root: &Path, dir: &Path, files: &mut BTreeMap<String, Vec<u8>>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect(root, &path, files)?;
        } else {
            let rel = path.strip_prefix(root).unwrap().display().to_string();
            files.insert(rel, std::fs::read(&path)?);
        }
    }
    Ok(())
}

pub fn determinism() -> Check {
    let mut runs = Vec::new();
    for workers in ["1", "4", "4"] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        runs.push(run_pipeline(dir.path(), workers)?);
    }
    let first = &runs[0];
    for (i, other) in runs.iter().enumerate().skip(1) {
        ensure(first.keys().eq(other.keys()), || format!("run {i} wrote a different file set"))?;
        for (name, bytes) in first {
            ensure(&other[name] == bytes, || format!("{name} differs between runs 0 and {i}"))?;
        }
    }
    let subcommands: std::collections::BTreeSet<String> = STEPS
        .iter()
        .map(|s| match s[0] {
            "score" | "eval" | "ablate" => s[0].to_string(),
            _ => format!("{} {}", s[0], s[1]),
        })
        .collect();
    Ok(format!(
        "{} subcommands, {} output files identical across workers 1/4/4",
        subcommands.len(),
        first.len()
    ))
}
