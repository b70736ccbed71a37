use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn mia(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mia"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = mia(dir, args);
    assert!(
        out.status.success(),
        "mia {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fixture_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(
        Path::new(FIXTURES).join("scored.jsonl"),
        dir.path().join("scored.jsonl"),
    )
    .unwrap();
    dir
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {line}"))
}

/// `(record_id, attack) -> value` from a score CSV.
fn csv_values(path: &Path) -> Vec<(String, String, f64)> {
    read(path)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let mut f = l.splitn(4, ',');
            let id = f.next().unwrap().to_owned();
            let attack = f.next().unwrap().to_owned();
            let v = f.next().unwrap().parse().unwrap();
            (id, attack, v)
        })
        .collect()
}

fn write_lines(path: &Path, lines: &[Value]) {
    let text: String = lines.iter().map(|v| format!("{v}\n")).collect();
    std::fs::write(path, text).unwrap();
}

#[test]
fn score_output_matches_golden_files() {
    let dir = fixture_dir();
    for (out, golden) in [
        ("scores.csv", "scores.golden.csv"),
        ("scores.jsonl", "scores.golden.jsonl"),
    ] {
        ok(dir.path(), &["score", "-i", "scored.jsonl", "-o", out]);
        assert_eq!(
            read(dir.path().join(out)),
            read(Path::new(FIXTURES).join(golden)),
            "{out} differs from {golden}"
        );
    }
}

#[test]
fn strict_scoring_fails_on_missing_reference() {
    let dir = fixture_dir();
    let out = mia(
        dir.path(),
        &["score", "-i", "scored.jsonl", "-o", "s.csv", "--attacks", "ref", "--strict"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["kind"], "missing_input");
    assert_eq!(err["record_id"], "r6");
    assert_eq!(err["attack"], "ref");
    assert!(!dir.path().join("s.csv").exists());
}

#[test]
fn mink_at_100_percent_reproduces_loss() {
    let dir = fixture_dir();
    ok(dir.path(), &["score", "-i", "scored.jsonl", "-o", "loss.csv", "--attacks", "loss"]);
    ok(
        dir.path(),
        &["score", "-i", "scored.jsonl", "-o", "mink.csv", "--attacks", "mink", "--k", "100"],
    );
    let loss = csv_values(&dir.path().join("loss.csv"));
    let mink = csv_values(&dir.path().join("mink.csv"));
    assert_eq!(loss.len(), 8);
    for (l, m) in loss.iter().zip(&mink) {
        assert_eq!(l.0, m.0);
        assert_eq!(l.2.to_bits(), m.2.to_bits(), "{}", l.0);
    }
}

#[test]
fn eval_reports_perfect_separation_and_is_worker_independent() {
    let dir = fixture_dir();
    ok(dir.path(), &["score", "-i", "scored.jsonl", "-o", "s.csv"]);
    for (workers, out) in [("1", "ev1"), ("4", "ev4")] {
        ok(
            dir.path(),
            &[
                "--workers", workers, "eval", "--scores", "s.csv", "--data", "scored.jsonl",
                "--output-dir", out, "--attacks", "loss,mink",
            ],
        );
    }
    let report: Value = serde_json::from_str(&read(dir.path().join("ev1/report_loss.json"))).unwrap();
    assert_eq!(report["report"]["auc"], 1.0);
    assert_eq!(report["report"]["n_boot"], 1000);
    for f in ["report_loss.json", "report_mink.json", "summary.csv"] {
        assert_eq!(read(dir.path().join("ev1").join(f)), read(dir.path().join("ev4").join(f)), "{f}");
    }
}

#[test]
fn config_file_values_apply_and_flags_override_them() {
    let dir = fixture_dir();
    std::fs::write(
        dir.path().join("run.toml"),
        "[score]\nattacks = [\"mink\"]\nk = 100.0\n",
    )
    .unwrap();
    ok(dir.path(), &["--config", "run.toml", "score", "-i", "scored.jsonl", "-o", "a.csv"]);
    let a = read(dir.path().join("a.csv"));
    assert!(a.lines().next().unwrap().contains("\"k\":100.0"));
    assert!(a.contains("k_percent\"\":100.0"));

    ok(
        dir.path(),
        &["--config", "run.toml", "score", "-i", "scored.jsonl", "-o", "b.csv", "--k", "50"],
    );
    assert!(read(dir.path().join("b.csv")).contains("k_percent\"\":50.0"));
}

#[test]
fn usage_errors_exit_one_with_json() {
    let dir = fixture_dir();
    std::fs::write(dir.path().join("bad.toml"), "[score]\nkay = 3\n").unwrap();
    let cases: &[&[&str]] = &[
        &["score", "--no-such-flag"],
        &["score", "-o", "x.csv"],
        &["--config", "bad.toml", "score", "-i", "scored.jsonl", "-o", "x.csv"],
        &["--workers", "0", "score", "-i", "scored.jsonl", "-o", "x.csv"],
        &["score", "-i", "scored.jsonl", "-o", "x.csv", "--k", "0"],
    ];
    for args in cases {
        let out = mia(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert_eq!(stderr_json(&out)["error"], "usage", "{args:?}");
    }
}

#[test]
fn data_errors_exit_two_with_context() {
    let dir = fixture_dir();
    let out = mia(dir.path(), &["score", "-i", "missing.jsonl", "-o", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["kind"], "io");

    std::fs::write(dir.path().join("broken.jsonl"), "{\"id\":\"a\",\"label\":\"member\"}\n").unwrap();
    let out = mia(dir.path(), &["score", "-i", "broken.jsonl", "-o", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["kind"], "schema");
    assert_eq!(err["line"], 1);
}

#[test]
fn help_documents_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let help = |args: &[&str]| String::from_utf8(ok(dir.path(), args).stdout).unwrap();
    assert!(help(&["score", "--help"]).contains("[default: 20]"));
    let decon = help(&["ngram", "decon", "--help"]);
    for d in ["[default: 13]", "[default: 0.8]", "0.6%"] {
        assert!(decon.contains(d), "decon help lacks {d}");
    }
    assert!(help(&["ngram", "filter", "--help"]).contains("[default: 0.2]"));
    assert!(help(&["eval", "--help"]).contains("[default: 1000]"));
    assert!(help(&["ngram", "build", "--help"]).contains("0.6%"));
}

fn corpus(dir: &Path) -> PathBuf {
    let p = dir.join("corpus.jsonl");
    let docs: Vec<Value> = (0..20)
        .map(|i| {
            let text: Vec<String> = (0..30).map(|j| format!("w{}", (i * 37 + j * 11) % 97)).collect();
            serde_json::json!({"id": format!("c{i}"), "text": text.join(" ")})
        })
        .collect();
    write_lines(&p, &docs);
    p
}

fn unscored(id: &str, label: &str, text: &str) -> Value {
    let words: Vec<&str> = text.split_whitespace().collect();
    serde_json::json!({"id": id, "label": label, "text": text, "word_tokens": words})
}

#[test]
fn overlap_of_a_training_document_is_one() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let first: Value = serde_json::from_str(read(dir.path().join("corpus.jsonl")).lines().next().unwrap()).unwrap();
    write_lines(
        &dir.path().join("probe.jsonl"),
        &[
            unscored("train", "member", first["text"].as_str().unwrap()),
            unscored("fresh", "nonmember", &(0..30).map(|i| format!("z{i}")).collect::<Vec<_>>().join(" ")),
        ],
    );
    for backend in ["bloom", "exact"] {
        let idx = format!("{backend}.idx");
        ok(
            dir.path(),
            &["ngram", "build", "--corpus", "corpus.jsonl", "-o", &idx, "--n", "5", "--backend", backend],
        );
        let stats = format!("{backend}.jsonl");
        ok(dir.path(), &["ngram", "overlap", "--index", &idx, "-i", "probe.jsonl", "-o", &stats]);
        let rows: Vec<Value> = read(dir.path().join(&stats))
            .lines()
            .skip(1)
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(rows[0]["record_id"], "train");
        assert_eq!(rows[0]["overlap_fraction"], 1.0);
        assert_eq!(rows[1]["overlap_fraction"], 0.0);
    }
    let out = mia(
        dir.path(),
        &["ngram", "overlap", "--index", "exact.idx", "-i", "probe.jsonl", "-o", "x", "--n", "13"],
    );
    assert_eq!(out.status.code(), Some(1));
    let out = mia(dir.path(), &["ngram", "overlap", "--index", "nope.idx", "-i", "probe.jsonl", "-o", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn decon_with_defaults_announces_its_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let member_text: String = (0..40).map(|i| format!("m{i}")).collect::<Vec<_>>().join(" ");
    let copied = member_text.clone();
    let fresh: String = (0..40).map(|i| format!("f{i}")).collect::<Vec<_>>().join(" ");
    write_lines(&dir.path().join("members.jsonl"), &[unscored("m", "member", &member_text)]);
    write_lines(
        &dir.path().join("non.jsonl"),
        &[unscored("copy", "nonmember", &copied), unscored("new", "nonmember", &fresh)],
    );
    ok(
        dir.path(),
        &["ngram", "decon", "--members", "members.jsonl", "--nonmembers", "non.jsonl", "-o", "kept.jsonl"],
    );
    let report: Value = serde_json::from_str(&read(dir.path().join("kept.jsonl.report.json"))).unwrap();
    assert_eq!(report["header"], "decontamination: n=13, threshold 0.80");
    assert_eq!(report["removed"][0]["record_id"], "copy");
    let kept = read(dir.path().join("kept.jsonl"));
    assert!(kept.contains("\"id\":\"new\""));
    assert!(!kept.contains("\"id\":\"copy\""));
}

#[test]
fn default_epochs_ablation_has_four_levels_per_attack() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["ablate", "--axis", "epochs", "-o", "ab.csv", "--n-boot", "100"]);
    let text = read(dir.path().join("ab.csv"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 4 * 4);
    for level in ["1", "2", "4", "8"] {
        let n = rows.iter().filter(|r| r.split(',').nth(1) == Some(level)).count();
        assert_eq!(n, 4, "level {level}");
    }
}

#[test]
fn perturb_edit_emits_twenty_trials_per_member_by_default() {
    let dir = fixture_dir();
    ok(dir.path(), &["perturb", "edit", "-i", "scored.jsonl", "-o", "ed.jsonl", "--n-swaps", "2"]);
    let text = read(dir.path().join("ed.jsonl"));
    let records: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|v| v.get("id").is_some())
        .collect();
    assert_eq!(records.len(), 4 * 20);
    for m in ["r0", "r1", "r2", "r3"] {
        let prefix = format!("{m}#edit-n2-t");
        assert_eq!(records.iter().filter(|r| r["id"].as_str().unwrap().starts_with(&prefix)).count(), 20);
    }
    assert!(records.iter().all(|r| r["label"] == "modified"));

    ok(dir.path(), &["perturb", "edit", "-i", "scored.jsonl", "-o", "ed2.jsonl", "--n-swaps", "2"]);
    assert_eq!(text, read(dir.path().join("ed2.jsonl")));
}

#[test]
fn separate_reference_stream_matches_inline_reference() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["toylm", "synth", "-o", "train.jsonl", "--docs", "50"]);
    ok(d, &["toylm", "synth", "-o", "refc.jsonl", "--docs", "50", "--seed", "3"]);
    ok(d, &["toylm", "synth", "-o", "bench.jsonl", "--docs", "10", "--seed", "4", "--label", "nonmember"]);
    ok(d, &["toylm", "train", "--corpus", "train.jsonl", "-o", "lm.json"]);
    ok(d, &["toylm", "train", "--corpus", "refc.jsonl", "-o", "ref.json", "--order", "2"]);
    ok(
        d,
        &["toylm", "score", "--model", "lm.json", "--reference-model", "ref.json", "-i", "bench.jsonl", "-o", "inline.jsonl"],
    );
    ok(
        d,
        &[
            "toylm", "score", "--model", "lm.json", "--reference-model", "ref.json", "-i", "bench.jsonl",
            "-o", "target.jsonl", "--reference-output", "refstream.jsonl",
        ],
    );
    ok(d, &["score", "-i", "inline.jsonl", "-o", "a.csv", "--attacks", "ref"]);
    ok(
        d,
        &["score", "-i", "target.jsonl", "--reference", "refstream.jsonl", "-o", "b.csv", "--attacks", "ref"],
    );
    let a = csv_values(&d.join("a.csv"));
    let b = csv_values(&d.join("b.csv"));
    assert_eq!(a.len(), 10);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.0, y.0);
        assert!((x.2 - y.2).abs() <= 1e-12, "{}: {} vs {}", x.0, x.2, y.2);
    }
}
