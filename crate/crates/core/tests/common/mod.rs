//! Deterministic synthetic corpora and prediction files.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const SYLLABLES: &[&str] = &["ka", "lo", "mi", "ren", "tu", "sa", "vel", "dor", "ni", "pa", "qua", "zen", "bo", "fi", "gar"];

/// Datasets with system metadata, plus one without.
pub const DATASETS: &[&str] = &["ExpertQA", "RAGTruth", "AggreFact-CNN", "Wice"];
pub const SYSTEMS: &[&str] = &["alpha", "beta", "gamma", "delta", "epsilon"];

fn word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=3);
    (0..n).map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())]).collect()
}

fn sentence(rng: &mut ChaCha8Rng, words: usize) -> String {
    let mut s = String::new();
    for i in 0..words {
        let w = word(rng);
        if i == 0 {
            let mut c = w.chars();
            let first = c.next().unwrap().to_ascii_uppercase();
            write!(s, "{first}{}", c.as_str()).unwrap();
        } else {
            write!(s, " {w}").unwrap();
        }
    }
    s.push('.');
    s
}

pub fn document(rng: &mut ChaCha8Rng, target_words: usize) -> String {
    let mut sentences = Vec::new();
    let mut total = 0;
    while total < target_words {
        let n = rng.gen_range(6..=20);
        sentences.push(sentence(rng, n));
        total += n;
    }
    sentences.join(" ")
}

pub struct Fixture {
    pub corpus: String,
    /// `(evaluator, prediction file contents)`.
    pub predictions: Vec<(String, String)>,
}

/// `n_claims` claims over shared documents and `n_evaluators` noisy evaluators.
pub fn synth(n_claims: usize, n_evaluators: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = String::new();
    let mut labels = Vec::with_capacity(n_claims);
    let mut id = 0usize;
    let mut response = 0usize;
    while id < n_claims {
        let dataset = DATASETS[rng.gen_range(0..DATASETS.len())];
        let long = rng.gen_bool(0.2);
        let target = if long { rng.gen_range(520..900) } else { rng.gen_range(60..400) };
        let doc = document(&mut rng, target);
        let doc_words: Vec<&str> = doc.split_whitespace().collect();
        let system_idx = rng.gen_range(0..SYSTEMS.len());
        let per_doc = rng.gen_range(1..=6).min(n_claims - id);
        let mut in_response = 0;
        for _ in 0..per_doc {
            if in_response == 0 {
                response += 1;
                in_response = rng.gen_range(1..=3);
            }
            in_response -= 1;
            // Weaker systems produce more unsupported claims.
            let supported = rng.gen_bool(0.9 - 0.08 * system_idx as f64);
            let claim = if supported {
                let len = rng.gen_range(5..12).min(doc_words.len());
                let start = rng.gen_range(0..=doc_words.len() - len);
                let mut words: Vec<String> = doc_words[start..start + len].iter().map(|w| w.to_string()).collect();
                for _ in 0..rng.gen_range(0..=3) {
                    let at = rng.gen_range(0..words.len());
                    words[at] = word(&mut rng);
                }
                words.join(" ")
            } else {
                let n = rng.gen_range(5..12);
                sentence(&mut rng, n)
            };
            let label = u8::from(if supported { rng.gen_bool(0.9) } else { rng.gen_bool(0.1) });
            let mut rec = json!({
                "schema_version": 1,
                "claim_id": format!("c{id:06}"),
                "dataset": dataset,
                "claim": claim,
                "document": doc,
                "label": label,
            });
            if dataset != "Wice" {
                rec["system"] = json!(SYSTEMS[system_idx]);
                rec["response_id"] = json!(format!("r{response:06}"));
            }
            corpus.push_str(&rec.to_string());
            corpus.push('\n');
            labels.push(label);
            id += 1;
        }
    }
    let predictions = (0..n_evaluators)
        .map(|e| {
            let name = format!("eval-{e}");
            let noise = 0.15 + 0.05 * e as f64;
            let shift = 0.04 * e as f64 - 0.08;
            let mut out = String::new();
            for (i, &label) in labels.iter().enumerate() {
                let base = if label == 1 { 0.68 } else { 0.32 };
                let s: f64 = (base + shift + rng.gen_range(-1.0..1.0) * noise * 2.0).clamp(0.0, 1.0);
                let s = (s * 1000.0).round() / 1000.0;
                writeln!(out, "{}", json!({"evaluator": name, "claim_id": format!("c{i:06}"), "score": s})).unwrap();
            }
            (name, out)
        })
        .collect();
    Fixture { corpus, predictions }
}

/// Writes the fixture and a config selecting `analyses`; returns the config path.
pub fn write_fixture(dir: &Path, fixture: &Fixture, analyses: &[&str]) -> PathBuf {
    std::fs::write(dir.join("corpus.jsonl"), &fixture.corpus).unwrap();
    let mut preds = Vec::new();
    for (name, text) in &fixture.predictions {
        let file = format!("{name}.jsonl");
        std::fs::write(dir.join(&file), text).unwrap();
        preds.push(file);
    }
    let config = format!(
        "corpus = [\"corpus.jsonl\"]\npredictions = {preds:?}\noutput_dir = \"out\"\nanalyses = {analyses:?}\n"
    );
    let path = dir.join("audit.toml");
    std::fs::write(&path, config).unwrap();
    path
}
