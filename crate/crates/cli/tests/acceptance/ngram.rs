//! N-gram index against an independent ordered-set reference, and the
//! decontamination / filter postconditions.

use std::collections::{BTreeSet, HashMap};

use mia_core::datamodel::{Dataset, Document, Label, ScoredRecord};
use mia_core::ngram::{
    build_index, decontaminate, filter_low_overlap, overlap_fraction, Backend, DeconConfig,
    IndexConfig,
};
use mia_core::toylm::SyntheticSource;
use rand::Rng;

use crate::{ensure, Check};

const N: usize = 13;
const CORPUS_DOCS: u64 = 10_000;

#[derive(Default)]
struct Interner(HashMap<String, u32>);

impl Interner {
    fn ids(&mut self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .map(|w| {
                let next = self.0.len() as u32;
                *self.0.entry(w.to_owned()).or_insert(next)
            })
            .collect()
    }
}

fn grams(ids: &[u32]) -> impl Iterator<Item = [u32; N]> + '_ {
    ids.windows(N).map(|w| w.try_into().unwrap())
}

/// Records spanning the overlap range: corpus documents, corpus prefixes
/// spliced onto fresh text, and fresh documents from the same language.
fn probe_records(corpus: &[Document], count: usize) -> Vec<ScoredRecord> {
    let fresh = SyntheticSource::default().with_seed(77, "fresh").generator().unwrap();
    let mut r = mia_core::rng::stream(0, "acceptance-probe", 0);
    (0..count)
        .map(|i| {
            let base = &corpus[(i * 7) % corpus.len()].text;
            let text = match i % 3 {
                0 => base.clone(),
                1 => {
                    let words: Vec<&str> = base.split_whitespace().collect();
                    let keep = r.random_range(0..=words.len());
                    let tail = fresh.document_text(i as u64);
                    let mut out: Vec<&str> = words[..keep].to_vec();
                    out.extend(tail.split_whitespace().take(words.len() - keep));
                    out.join(" ")
                }
                _ => fresh.document_text(i as u64),
            };
            ScoredRecord::unscored(format!("p{i:05}"), Label::Nonmember, text)
        })
        .collect()
}

pub fn equivalence() -> Check {
    let src = SyntheticSource::default().with_seed(12, "corpus");
    let corpus: Vec<Document> = src.generator().unwrap().documents(0..CORPUS_DOCS).collect();
    let records = probe_records(&corpus, 3000);

    let mut words = Interner::default();
    let mut reference: BTreeSet<[u32; N]> = BTreeSet::new();
    for d in &corpus {
        reference.extend(grams(&words.ids(&d.text)));
    }

    let exact = build_index(&corpus, &IndexConfig::new(N).backend(Backend::Exact)).map_err(|e| e.to_string())?;
    let bloom = build_index(&corpus, &IndexConfig::new(N)).map_err(|e| e.to_string())?;

    let mut diffs = Vec::with_capacity(records.len());
    for r in &records {
        let ids = words.ids(&r.text);
        let windows = ids.len().saturating_sub(N - 1);
        let hits = grams(&ids).filter(|g| reference.contains(g)).count();
        let want = if windows == 0 { 0.0 } else { hits as f64 / windows as f64 };
        let e = overlap_fraction(&exact, r);
        ensure(e.overlap_fraction == want && e.hit_count == hits && e.window_count == windows, || {
            format!("{}: exact {}/{} vs reference {hits}/{windows}", r.id, e.hit_count, e.window_count)
        })?;
        let b = overlap_fraction(&bloom, r);
        ensure(b.hit_count >= e.hit_count, || format!("{}: bloom below exact", r.id))?;
        diffs.push(b.overlap_fraction - e.overlap_fraction);
    }
    let k = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / k;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    let bound = 0.006 + 3.0 * sd / k.sqrt();
    ensure(mean <= bound, || format!("bloom - exact mean {mean:.5} > {bound:.5}"))?;

    let vocab = src.vocabulary();
    let mut r = mia_core::rng::stream(0, "acceptance-heldout-grams", 0);
    let mut tested = 0usize;
    let mut false_hits = 0usize;
    let mut seen = BTreeSet::new();
    while tested < 100_000 {
        let g: Vec<&str> = (0..N).map(|_| vocab[r.random_range(0..vocab.len())].as_str()).collect();
        let key: [u32; N] = words.ids(&g.join(" ")).try_into().unwrap();
        if reference.contains(&key) || !seen.insert(key) {
            continue;
        }
        tested += 1;
        if bloom.contains(&g).map_err(|e| e.to_string())? {
            false_hits += 1;
        }
    }
    let fpr = false_hits as f64 / tested as f64;
    ensure(fpr <= 0.01, || format!("bloom FPR {fpr:.5} on {tested} held-out grams"))?;
    Ok(format!(
        "{} records exact == reference on {CORPUS_DOCS} docs ({} distinct {N}-grams); bloom - exact mean {mean:.5} <= {bound:.5}; held-out FPR {fpr:.5} ({false_hits}/{tested})",
        records.len(),
        reference.len()
    ))
}

fn max_overlap_against(members: &Dataset, ds: &Dataset, n: usize) -> Result<f64, String> {
    let docs: Vec<Document> = members.iter().map(Document::from).collect();
    let idx = build_index(&docs, &IndexConfig::new(n).backend(Backend::Exact)).map_err(|e| e.to_string())?;
    Ok(ds
        .iter()
        .map(|r| overlap_fraction(&idx, r).overlap_fraction)
        .fold(0.0, f64::max))
}

pub fn postconditions() -> Check {
    let src = SyntheticSource::default().with_seed(31, "member");
    let member_docs: Vec<Document> = src.generator().unwrap().documents(0..1000).collect();
    let members = Dataset::new(
        member_docs
            .iter()
            .map(|d| ScoredRecord::unscored(d.id.clone(), Label::Member, d.text.clone()))
            .collect(),
    )
    .unwrap();
    let nonmembers = Dataset::new(probe_records(&member_docs, 1500)).unwrap();
    let mut report = Vec::new();

    for backend in [Backend::Bloom, Backend::Exact] {
        let cfg = DeconConfig { backend, ..DeconConfig::default() };
        ensure(cfg.n == 13 && cfg.max_overlap == 0.8, || "decon defaults changed".into())?;
        let once = decontaminate(&members, &nonmembers, &cfg).map_err(|e| e.to_string())?;
        let worst = max_overlap_against(&members, &once.kept, 13)?;
        ensure(worst <= 0.8, || format!("{backend}: retained overlap {worst}"))?;
        ensure(!once.removed.is_empty() && !once.kept.is_empty(), || {
            format!("{backend}: decon removed {} of {}", once.removed.len(), nonmembers.len())
        })?;
        let twice = decontaminate(&members, &once.kept, &cfg).map_err(|e| e.to_string())?;
        ensure(twice.kept == once.kept && twice.removed.is_empty(), || {
            format!("{backend}: decon not idempotent")
        })?;

        let docs: Vec<Document> = members.iter().map(Document::from).collect();
        let idx = build_index(&docs, &IndexConfig::new(13).backend(backend)).map_err(|e| e.to_string())?;
        let f1 = filter_low_overlap(&nonmembers, &idx, 0.2).map_err(|e| e.to_string())?;
        let worst_f = f1
            .kept
            .iter()
            .map(|r| overlap_fraction(&idx, r).overlap_fraction)
            .fold(0.0, f64::max);
        ensure(worst_f <= 0.2, || format!("{backend}: filtered overlap {worst_f}"))?;
        let f2 = filter_low_overlap(&f1.kept, &idx, 0.2).map_err(|e| e.to_string())?;
        ensure(f2.kept == f1.kept && f2.removed.is_empty(), || {
            format!("{backend}: filter not idempotent")
        })?;
        report.push(format!(
            "{backend}: decon kept {}/{} (max {worst:.3}), filter kept {} (max {worst_f:.3})",
            once.kept.len(),
            nonmembers.len(),
            f1.kept.len()
        ));
    }
    Ok(format!("{}; both idempotent", report.join("; ")))
}
