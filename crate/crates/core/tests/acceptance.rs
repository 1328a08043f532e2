//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use autoais_audit::chunking::{chunk_document, pack_chunks, r2_diff, split_sentences, word_count};
use autoais_audit::consistency::iou;
use autoais_audit::corpus::{ClaimRecord, Corpus, PredictionSet, TaskGroup};
use autoais_audit::metrics::{binarize, confusion, rates, ConfusionCounts, Label};
use autoais_audit::quantify::{adjusted_count, tune_threshold, TuningObjective};
use autoais_audit::rank::{kendall_tau, system_error_counts, two_prop_ztest, LabelSource};
use autoais_audit::quantify::Level;
use autoais_audit::report::{self, Analysis, Inputs, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: impl Into<String>, fail: impl Into<String>) -> Outcome {
    if cond {
        Ok(ok.into())
    } else {
        Err(fail.into())
    }
}

fn record(id: &str, dataset: &str, system: Option<&str>, response: Option<&str>, label: Label) -> ClaimRecord {
    ClaimRecord {
        claim_id: id.to_string(),
        dataset: dataset.to_string(),
        system: system.map(str::to_string),
        response_id: response.map(str::to_string),
        claim: format!("claim {id}"),
        document: "A document.".to_string(),
        label,
        task_group: TaskGroup::Other,
    }
}

fn rates_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs: Vec<(u8, f64)> = (0..1000).map(|_| (rng.gen_range(0..=1), (rng.gen_range(0..=100) as f64) / 100.0)).collect();
    let labels: Vec<Label> = pairs.iter().map(|p| Label::from_u8(p.0).unwrap()).collect();
    let preds: Vec<Label> = pairs.iter().map(|p| binarize(p.1, 0.5)).collect();
    let c = confusion(&labels, &preds).map_err(|e| e.to_string())?;
    let r = rates(&c);
    let (mut tp, mut fp, mut tn, mut fneg) = (0u64, 0u64, 0u64, 0u64);
    for &(l, s) in &pairs {
        match (l, s >= 0.5) {
            (1, true) => tp += 1,
            (1, false) => fneg += 1,
            (0, true) => fp += 1,
            _ => tn += 1,
        }
    }
    if (c.true_pos, c.false_pos, c.true_neg, c.false_neg) != (tp, fp, tn, fneg) {
        return Err(format!("counts {c:?} vs brute force ({tp},{fp},{tn},{fneg})"));
    }
    let tpr = tp as f64 / (tp + fneg) as f64;
    let tnr = tn as f64 / (tn + fp) as f64;
    let close = |a: Option<f64>, b: f64| a.is_some_and(|a| (a - b).abs() <= 1e-15);
    let all = close(r.tpr, tpr) && close(r.tnr, tnr) && close(r.fpr, 1.0 - tnr) && close(r.fnr, 1.0 - tpr) && close(r.bacc, (tpr + tnr) / 2.0);
    let elapsed = start.elapsed();
    check(
        all && elapsed < Duration::from_secs(1),
        format!("1000 pairs exact, {elapsed:.2?}"),
        format!("rates {r:?} vs tpr={tpr} tnr={tnr}, {elapsed:.2?}"),
    )
}

fn bacc_composition() -> Outcome {
    let c = ConfusionCounts {
        true_pos: 68,
        false_neg: 32,
        true_neg: 53,
        false_pos: 47,
    };
    let bacc = rates(&c).bacc.ok_or("undefined bacc")?;
    check(
        (bacc - 0.605).abs() < 1e-12 && (bacc - 0.608).abs() <= 0.005,
        format!("BAcc = {bacc:.3}, table value 0.608"),
        format!("BAcc = {bacc}"),
    )
}

fn bias_cell() -> Outcome {
    let mut recs = Vec::new();
    let mut scores = BTreeMap::new();
    for i in 0..1000 {
        let id = format!("c{i:04}");
        let label = if i < 192 { Label::Unattributable } else { Label::Attributable };
        recs.push(record(&id, "D", Some("Model-Extra"), Some(&id), label));
        scores.insert(id, if i < 63 { 0.1 } else { 0.9 });
    }
    let corpus = Corpus::new("fixture", recs).map_err(|e| e.to_string())?;
    let preds = PredictionSet::new("evaluator", scores, 0.5).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::new(vec![], vec![], "unused");
    cfg.analyses = vec![Analysis::Quantify];
    let inputs = Inputs::new(corpus, vec![preds]).map_err(|e| e.to_string())?;
    let (artifacts, _) = report::build(&cfg, &inputs).map_err(|e| e.to_string())?;
    let table = artifacts.iter().find(|a| a.path == "quantify/D.csv").ok_or("no quantify table")?;
    let text = String::from_utf8_lossy(&table.bytes);
    let row = text.lines().find(|l| l.starts_with("claim,Model-Extra,")).ok_or("no claim-level row")?;
    check(row == "claim,Model-Extra,19.2,6.3 (-12.9)", format!("row `{row}`"), format!("row `{row}`"))
}

fn adjusted_counts() -> Outcome {
    let start = Instant::now();
    let (recall0, fallout0, prevalence, n) = (0.85, 0.10, 0.20, 10_000);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut predicted_zero = 0usize;
    for _ in 0..n {
        let truly_zero = rng.gen_bool(prevalence);
        let p = if truly_zero { recall0 } else { fallout0 };
        predicted_zero += rng.gen_bool(p) as usize;
    }
    let raw = predicted_zero as f64 / n as f64;
    let adjusted = adjusted_count(raw, recall0, fallout0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let msg = format!("raw {raw:.4} (off by {:.4}), adjusted {adjusted:.4}, {elapsed:.2?}", (raw - prevalence).abs());
    check(
        (adjusted - prevalence).abs() <= 0.02 && (raw - prevalence).abs() >= 0.05 && elapsed < Duration::from_secs(1),
        msg.clone(),
        msg,
    )
}

fn zero_bias_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..100 {
        let n = rng.gen_range(1..=200);
        let samples: Vec<(f64, Label)> = (0..n)
            .map(|_| ((rng.gen_range(0..=50) as f64) / 50.0, Label::from_u8(rng.gen_range(0..=1)).unwrap()))
            .collect();
        let labeled_zero = samples.iter().filter(|s| !s.1.is_attributable()).count() as i64;
        let abs_bias = |t: f64| (samples.iter().filter(|s| s.0 < t).count() as i64 - labeled_zero).abs();
        let chosen = tune_threshold(&samples, TuningObjective::ZeroBias).map_err(|e| format!("case {case}: {e}"))?;
        let mut sweep = vec![0.0, 1.0];
        for &(s, _) in &samples {
            sweep.push(s);
            sweep.push(f64::from_bits(s.to_bits() + 1).min(1.0));
        }
        let best = sweep.iter().map(|&t| abs_bias(t)).min().unwrap();
        if abs_bias(chosen) > best {
            return Err(format!("case {case}: |bias| {} at {chosen} > {best}", abs_bias(chosen)));
        }
    }
    Ok("100 sets, returned |bias| minimal".into())
}

fn iou_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..500 {
        let universe = rng.gen_range(0..40);
        let draw = |rng: &mut ChaCha8Rng| (0..universe).filter(|_| rng.gen_bool(0.4)).collect::<Vec<u32>>();
        let (va, vb) = (draw(&mut rng), draw(&mut rng));
        let inter = va.iter().filter(|x| vb.contains(x)).count();
        let union = va.len() + vb.iter().filter(|x| !va.contains(x)).count();
        let expected = (union > 0).then(|| inter as f64 / union as f64);
        let got = iou(&va.iter().copied().collect::<BTreeSet<_>>(), &vb.iter().copied().collect::<BTreeSet<_>>());
        if got != expected {
            return Err(format!("case {case}: {got:?} vs {expected:?}"));
        }
    }
    Ok("500 pairs exact".into())
}

fn z_test() -> Outcome {
    let t = two_prop_ztest(30, 100, 20, 100).map_err(|e| e.to_string())?;
    let d1 = two_prop_ztest(0, 100, 0, 100).map_err(|e| e.to_string())?;
    let d2 = two_prop_ztest(100, 100, 100, 100).map_err(|e| e.to_string())?;
    let msg = format!("z = {:.5} (want 1.6667), p = {:.5} (want 0.0956), degenerate p = {}, {}", t.z, t.p_value, d1.p_value, d2.p_value);
    check(
        (t.z - 1.6667).abs() <= 1e-4 && (t.p_value - 0.0956).abs() <= 1e-4 && d1.p_value == 1.0 && d2.p_value == 1.0,
        msg.clone(),
        msg,
    )
}

fn kendall_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..200 {
        let n = rng.gen_range(2..=10);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
        let (mut conc, mut disc) = (0i64, 0i64);
        for i in 0..n {
            for j in 0..n {
                if i < j {
                    let p = (x[i] - x[j]) * (y[i] - y[j]);
                    if p > 0.0 {
                        conc += 1;
                    } else if p < 0.0 {
                        disc += 1;
                    }
                }
            }
        }
        let expected = (conc - disc) as f64 / (n * (n - 1) / 2) as f64;
        let got = kendall_tau(&x, &y).map_err(|e| e.to_string())?;
        if got != expected {
            return Err(format!("case {case}: {got} vs {expected}"));
        }
    }
    let one_swap = kendall_tau(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[1.0, 2.0, 3.0, 4.0, 6.0, 5.0]).map_err(|e| e.to_string())?;
    check(
        (one_swap - 0.8667).abs() < 1e-4,
        format!("200 cases exact, one swap at n=6 -> {one_swap:.4}"),
        format!("one swap -> {one_swap}"),
    )
}

const WORDS: &[&str] = &["red", "green", "blue", "cat", "dog", "sat", "ran", "mat", "sun", "the"];

fn random_doc(rng: &mut ChaCha8Rng) -> String {
    let sentences = rng.gen_range(1..12);
    (0..sentences)
        .map(|_| {
            let len = rng.gen_range(1..15);
            let words: Vec<&str> = (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
            let mut s = words.join(" ");
            s[..1].make_ascii_uppercase();
            s + "."
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn r2diff_nonnegative() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut single = 0;
    for case in 0..1000 {
        let doc = random_doc(&mut rng);
        let claim: Vec<&str> = (0..rng.gen_range(0..8)).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
        let limit = NonZeroUsize::new(rng.gen_range(1..40)).unwrap();
        let plan = chunk_document(&doc, limit);
        let d = r2_diff(&claim.join(" "), &doc, &plan);
        if d.diff < 0.0 {
            return Err(format!("case {case}: diff {}", d.diff));
        }
        if plan.len() == 1 {
            single += 1;
            if d.diff != 0.0 {
                return Err(format!("case {case}: single chunk but diff {}", d.diff));
            }
        }
    }
    Ok(format!("1000 cases >= 0, {single} single-chunk cases exactly 0"))
}

fn chunk_plan_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..1000 {
        let doc = random_doc(&mut rng);
        let limit = rng.gen_range(1..40);
        let sentences = split_sentences(&doc);
        let plan = pack_chunks(&sentences, NonZeroUsize::new(limit).unwrap());
        let mut next = 0;
        for c in &plan.chunks {
            if c.first_sentence != next || c.sentence_count == 0 {
                return Err(format!("case {case}: order/coverage broken at sentence {next}"));
            }
            let members = &sentences[next..next + c.sentence_count];
            let words: usize = members.iter().map(|s| word_count(s)).sum();
            if c.text != members.join(" ") || c.words != words {
                return Err(format!("case {case}: chunk text/words mismatch"));
            }
            if c.oversized {
                if c.sentence_count != 1 || words <= limit {
                    return Err(format!("case {case}: bad oversized chunk"));
                }
            } else if words > limit {
                return Err(format!("case {case}: chunk of {words} words over limit {limit}"));
            }
            next += c.sentence_count;
        }
        if next != sentences.len() {
            return Err(format!("case {case}: covered {next} of {} sentences", sentences.len()));
        }
    }
    Ok("1000 documents".into())
}

fn strict_aggregation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..1000 {
        let mut recs = Vec::new();
        let mut scores = BTreeMap::new();
        let mut truth: BTreeMap<String, (u64, u64, u64, u64)> = BTreeMap::new();
        let responses = rng.gen_range(1..8);
        let mut id = 0;
        for r in 0..responses {
            let system = ["s1", "s2", "s3"][rng.gen_range(0..3)];
            let (mut all_label, mut all_pred) = (true, true);
            for _ in 0..rng.gen_range(1..5) {
                let label = rng.gen_bool(0.7);
                let score: f64 = rng.gen_range(0.0..1.0);
                all_label &= label;
                all_pred &= score >= 0.5;
                let cid = format!("c{id}");
                recs.push(record(&cid, "D", Some(system), Some(&format!("r{r}")), Label::from(label)));
                scores.insert(cid, score);
                id += 1;
            }
            let t = truth.entry(system.to_string()).or_default();
            t.0 += (!all_label) as u64;
            t.1 += (!all_pred) as u64;
            t.2 += 1;
            t.3 += 1;
        }
        let corpus = Corpus::new("g", recs).map_err(|e| e.to_string())?;
        let preds = PredictionSet::new("e", scores, 0.5).map_err(|e| e.to_string())?;
        let gold = system_error_counts(&corpus, LabelSource::Gold, Level::Response).map_err(|e| e.to_string())?;
        let pred = system_error_counts(&corpus, LabelSource::Predicted(&preds), Level::Response).map_err(|e| e.to_string())?;
        for (system, &(lab_err, pred_err, n, _)) in &truth {
            if gold[system] != (lab_err, n) || pred[system] != (pred_err, n) {
                return Err(format!("case {case}: system {system}: gold {:?} pred {:?} expected ({lab_err},{n}) ({pred_err},{n})", gold[system], pred[system]));
            }
        }
    }
    Ok("1000 groupings".into())
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixture = common::synth(30_000, 5, 2024);
    let all = ["metrics", "consistency", "quantify", "calibrate", "rank", "rouge-bins", "chunking"];
    let config = common::write_fixture(dir.path(), &fixture, &all);
    let mut times = Vec::new();
    let mut outs = Vec::new();
    for run in ["run-a", "run-b"] {
        let out = dir.path().join(run);
        let start = Instant::now();
        let status = Command::new(env!("CARGO_BIN_EXE_audit"))
            .args(["all", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        times.push(start.elapsed());
        if !status.status.success() {
            return Err(format!("audit failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        outs.push(out);
    }
    let (a, b) = (snapshot(&outs[0])?, snapshot(&outs[1])?);
    let identical = a == b;
    let msg = format!("30000 claims x 5 evaluators, {} files, runs {:.1?} / {:.1?}, identical: {identical}", a.len(), times[0], times[1]);
    check(identical && times.iter().all(|t| *t < Duration::from_secs(30)), msg.clone(), msg)
}

fn snapshot(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), bytes);
            }
        }
    }
    Ok(out)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("rates oracle", rates_oracle),
        ("bacc composition", bacc_composition),
        ("bias table cell", bias_cell),
        ("adjusted counts", adjusted_counts),
        ("zero-bias tuning optimality", zero_bias_optimality),
        ("iou oracle", iou_oracle),
        ("two-proportion z-test", z_test),
        ("kendall tau brute force", kendall_brute_force),
        ("r2-diff nonnegativity", r2diff_nonnegative),
        ("chunk plan invariants", chunk_plan_invariants),
        ("strict response aggregation", strict_aggregation),
        ("end-to-end determinism and performance", end_to_end),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
