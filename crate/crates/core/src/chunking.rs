//! Context-window simulation: sentence splitting, greedy chunk packing, chunk-max score
//! aggregation, R2-diff, and prediction-flip analysis.
//!
//! Chunk sizes count whitespace-separated words. Sentences are never split across chunks;
//! a sentence longer than the limit becomes its own (oversized) chunk.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::num::NonZeroUsize;

use serde::Serialize;

use crate::corpus::{parse_score_line, Corpus, CorpusError, PredictionSet};
use crate::metrics::{positive_prediction_rate, rates, ConfusionCounts, Label};
use crate::overlap::{by_document, pair_counts, rouge2_against, rouge2_ids, BigramCounts, PairCounts, Vocab};
use crate::par_map;

pub const DEFAULT_CHUNK_LIMIT: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum ChunkingError {
    #[error("no chunk scores to aggregate")]
    EmptyChunkScores,
    #[error("claim {claim_id:?} is missing from the {which} predictions")]
    CoverageMismatch { which: &'static str, claim_id: String },
    #[error("malformed chunk request id {0:?}")]
    BadRequestId(String),
    #[error("claim {claim_id:?}: expected {expected} chunk scores, found {found}")]
    IncompleteChunks {
        claim_id: String,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "u.s", "u.k", "inc", "ltd",
    "co", "corp", "no", "fig", "gen", "gov", "sen", "rep", "mt", "jan", "feb", "mar", "apr", "jun", "jul",
    "aug", "sep", "sept", "oct", "nov", "dec", "approx", "est", "dept", "al",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201d}' | '\u{2019}' | ')' | ']')
}

fn opens_sentence(c: char) -> bool {
    c.is_uppercase() || matches!(c, '"' | '\'' | '\u{201c}' | '\u{2018}' | '(' | '[')
}

/// The word ending at byte `end` (exclusive) is an abbreviation or a capital initial.
fn is_abbreviation(text: &str, end: usize) -> bool {
    let head = &text[..end];
    let start = head.rfind(char::is_whitespace).map_or(0, |i| i + head[i..].chars().next().unwrap().len_utf8());
    let word = head[start..]
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .trim_end_matches('.');
    if word.is_empty() {
        return false;
    }
    let mut chars = word.chars();
    if chars.next().is_some_and(char::is_uppercase) && chars.next().is_none() {
        return true;
    }
    ABBREVIATIONS.contains(&word.to_lowercase().as_str())
}

/// Rule-based sentence segmentation. Splits after `.`, `!` or `?` (plus closing quotes or
/// brackets) when whitespace follows and the next sentence opens with an uppercase letter
/// or quote, unless the period ends a known abbreviation or an initial.
pub fn split_sentences(document: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = document.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if !is_terminal(c) {
            continue;
        }
        let mut end = i + c.len_utf8();
        while let Some(&(j, d)) = iter.peek() {
            if is_terminal(d) || is_closer(d) {
                end = j + d.len_utf8();
                iter.next();
            } else {
                break;
            }
        }
        let rest = &document[end..];
        let trimmed = rest.trim_start();
        if trimmed.len() == rest.len() || trimmed.is_empty() {
            continue;
        }
        if !trimmed.chars().next().is_some_and(opens_sentence) {
            continue;
        }
        if c == '.' && end == i + 1 && is_abbreviation(document, i) {
            continue;
        }
        let sentence = document[start..end].trim();
        if !sentence.is_empty() {
            out.push(sentence);
        }
        start = document.len() - trimmed.len();
    }
    let tail = document[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Chunk {
    /// Index of the first sentence in the chunk.
    pub first_sentence: usize,
    pub sentence_count: usize,
    pub words: usize,
    /// A single sentence longer than the limit.
    pub oversized: bool,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChunkPlan {
    pub chunks: Vec<Chunk>,
    pub limit: usize,
    pub oversized_sentence_count: usize,
}

impl ChunkPlan {
    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }
}

/// Greedy left-to-right packing of whole sentences into chunks of at most `limit` words.
pub fn pack_chunks(sentences: &[&str], limit: NonZeroUsize) -> ChunkPlan {
    let limit = limit.get();
    let mut chunks = Vec::new();
    let mut oversized_sentence_count = 0;
    let mut current: Option<(usize, Vec<&str>, usize)> = None;

    fn close(chunks: &mut Vec<Chunk>, first: usize, parts: Vec<&str>, words: usize, oversized: bool) {
        chunks.push(Chunk {
            first_sentence: first,
            sentence_count: parts.len(),
            words,
            oversized,
            text: parts.join(" "),
        });
    }

    for (idx, &s) in sentences.iter().enumerate() {
        let w = word_count(s);
        if let Some((first, parts, words)) = current.take() {
            if words + w <= limit {
                let mut parts = parts;
                parts.push(s);
                current = Some((first, parts, words + w));
                continue;
            }
            close(&mut chunks, first, parts, words, false);
        }
        if w > limit {
            oversized_sentence_count += 1;
            close(&mut chunks, idx, vec![s], w, true);
        } else {
            current = Some((idx, vec![s], w));
        }
    }
    if let Some((first, parts, words)) = current {
        close(&mut chunks, first, parts, words, false);
    }
    ChunkPlan {
        chunks,
        limit,
        oversized_sentence_count,
    }
}

pub fn chunk_document(document: &str, limit: NonZeroUsize) -> ChunkPlan {
    pack_chunks(&split_sentences(document), limit)
}

/// Chunk-max aggregation of per-chunk evaluator scores.
pub fn chunked_score(chunk_scores: &[f64]) -> Result<f64, ChunkingError> {
    chunk_scores
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(ChunkingError::EmptyChunkScores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct R2Diff {
    pub full: f64,
    pub best_chunk: f64,
    pub diff: f64,
}

/// Full-document ROUGE-2 precision minus the best single-chunk precision.
pub fn r2_diff(claim: &str, document: &str, plan: &ChunkPlan) -> R2Diff {
    let claim_counts = BigramCounts::from_text(claim);
    r2_diff_counts(&claim_counts, &BigramCounts::from_text(document), &chunk_counts(plan))
}

pub(crate) fn chunk_counts(plan: &ChunkPlan) -> Vec<BigramCounts> {
    plan.chunks.iter().map(|c| BigramCounts::from_text(&c.text)).collect()
}

pub(crate) fn r2_diff_counts(claim: &BigramCounts, document: &BigramCounts, chunks: &[BigramCounts]) -> R2Diff {
    let full = rouge2_against(claim, document).precision;
    let best_chunk = chunks
        .iter()
        .map(|c| rouge2_against(claim, c).precision)
        .fold(0.0, f64::max);
    R2Diff {
        full,
        best_chunk,
        diff: full - best_chunk,
    }
}

/// R2-diff and chunk count for every claim of the corpus.
pub fn r2_diff_by_claim(corpus: &Corpus, limit: NonZeroUsize) -> BTreeMap<String, (R2Diff, usize)> {
    let docs = by_document(corpus);
    let records = corpus.records();
    par_map(&docs, |(doc, idx)| {
        let plan = chunk_document(doc, limit);
        let mut vocab = Vocab::default();
        let doc_counts = pair_counts(&vocab.ids(doc));
        let chunks: Vec<PairCounts> = plan.chunks.iter().map(|c| pair_counts(&vocab.ids(&c.text))).collect();
        idx.iter()
            .map(|&i| {
                let ids = vocab.ids(&records[i].claim);
                let claim = pair_counts(&ids);
                let full = rouge2_ids(&claim, ids.len(), &doc_counts).precision;
                let best_chunk = chunks.iter().map(|c| rouge2_ids(&claim, ids.len(), c).precision).fold(0.0, f64::max);
                let diff = R2Diff {
                    full,
                    best_chunk,
                    diff: full - best_chunk,
                };
                (records[i].claim_id.clone(), (diff, plan.len()))
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// One evaluator call on a (claim, chunk) pair; `request_id` is `claim_id#chunk_index`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChunkRequest {
    pub request_id: String,
    pub claim: String,
    pub chunk_text: String,
}

pub fn request_id(claim_id: &str, chunk_index: usize) -> String {
    format!("{claim_id}#{chunk_index}")
}

pub fn parse_request_id(id: &str) -> Option<(&str, usize)> {
    let (claim, idx) = id.rsplit_once('#')?;
    Some((claim, idx.parse().ok()?))
}

/// Requests for every chunk of every claim whose document spans more than one chunk.
/// Single-chunk claims reuse the full-document score.
pub fn chunk_requests(corpus: &Corpus, limit: NonZeroUsize) -> Vec<ChunkRequest> {
    let mut out = Vec::new();
    let mut plans: BTreeMap<&str, ChunkPlan> = BTreeMap::new();
    for r in corpus.records() {
        let plan = plans.entry(r.document.as_str()).or_insert_with(|| chunk_document(&r.document, limit));
        if plan.len() < 2 {
            continue;
        }
        for (k, c) in plan.chunks.iter().enumerate() {
            out.push(ChunkRequest {
                request_id: request_id(&r.claim_id, k),
                claim: r.claim.clone(),
                chunk_text: c.text.clone(),
            });
        }
    }
    out
}

pub fn write_chunk_requests<W: Write>(requests: &[ChunkRequest], mut out: W) -> std::io::Result<()> {
    for r in requests {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a chunk-score file: prediction-format lines keyed by `request_id`.
pub fn read_chunk_scores<R: Read>(input: R) -> Result<(String, BTreeMap<String, f64>), ChunkingError> {
    let mut evaluator = String::new();
    let mut scores = BTreeMap::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (ev, id, score) = parse_score_line(&line, idx + 1, "request_id")?;
        if evaluator.is_empty() {
            evaluator = ev;
        }
        if scores.insert(id.clone(), score).is_some() {
            return Err(CorpusError::DuplicateClaimId(id).into());
        }
    }
    Ok((evaluator, scores))
}

/// Chunk-max predictions under `full`'s evaluator name and threshold.
///
/// A claim with chunk scores must have every chunk of its document scored. A claim
/// without chunk scores whose document fits in one chunk takes its `full` score.
pub fn aggregate_chunk_scores(
    chunk_scores: &BTreeMap<String, f64>,
    full: &PredictionSet,
    corpus: &Corpus,
    limit: NonZeroUsize,
) -> Result<PredictionSet, ChunkingError> {
    let mut per_claim: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for (id, &s) in chunk_scores {
        let (claim, k) = parse_request_id(id).ok_or_else(|| ChunkingError::BadRequestId(id.clone()))?;
        if !corpus.contains(claim) {
            return Err(CorpusError::UnknownClaimId(claim.to_string()).into());
        }
        per_claim.entry(claim).or_default().push((k, s));
    }
    let mut plans: BTreeMap<&str, usize> = BTreeMap::new();
    let mut scores = BTreeMap::new();
    for r in corpus.records() {
        let expected = *plans.entry(r.document.as_str()).or_insert_with(|| chunk_document(&r.document, limit).len());
        let Some(parts) = per_claim.get(r.claim_id.as_str()) else {
            if expected == 1 {
                if let Some(s) = full.score(&r.claim_id) {
                    scores.insert(r.claim_id.clone(), s);
                }
            }
            continue;
        };
        let mut seen = vec![false; expected];
        for &(k, _) in parts {
            if k < expected {
                seen[k] = true;
            }
        }
        if parts.len() != expected || seen.iter().any(|s| !s) {
            return Err(ChunkingError::IncompleteChunks {
                claim_id: r.claim_id.clone(),
                expected,
                found: parts.len(),
            });
        }
        let values: Vec<f64> = parts.iter().map(|p| p.1).collect();
        scores.insert(r.claim_id.clone(), chunked_score(&values)?);
    }
    Ok(PredictionSet::new(full.evaluator.clone(), scores, full.threshold)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum R2Partition {
    /// R2-diff > 0: chunking breaks surface evidence.
    Positive,
    Zero,
}

impl R2Partition {
    pub fn of(diff: f64) -> Self {
        if diff > 0.0 {
            R2Partition::Positive
        } else {
            R2Partition::Zero
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            R2Partition::Positive => "r2diff>0",
            R2Partition::Zero => "r2diff=0",
        }
    }
}

/// Prediction changes caused by chunking within one (dataset, partition) cell.
/// Rates are over the cell's support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlipRow {
    pub dataset: String,
    pub partition: R2Partition,
    pub support: usize,
    pub flips_to_zero: usize,
    pub flips_to_one: usize,
    pub rate_to_zero: Option<f64>,
    pub rate_to_one: Option<f64>,
    pub ppr_full: Option<f64>,
    pub ppr_chunked: Option<f64>,
}

/// Support and mean R2-diff of one partition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionSummary {
    pub partition: R2Partition,
    pub support: usize,
    pub mean_diff: f64,
    /// Claims whose document spans more than one chunk.
    pub multi_chunk: usize,
}

/// Per-partition summary over the corpus claims found in `diffs`.
pub fn partition_summary(corpus: &Corpus, diffs: &BTreeMap<String, (R2Diff, usize)>) -> Vec<PartitionSummary> {
    let mut cells: BTreeMap<R2Partition, (usize, f64, usize)> = BTreeMap::new();
    for r in corpus.records() {
        if let Some((d, k)) = diffs.get(&r.claim_id) {
            let cell = cells.entry(R2Partition::of(d.diff)).or_default();
            cell.0 += 1;
            cell.1 += d.diff;
            cell.2 += (*k > 1) as usize;
        }
    }
    cells
        .into_iter()
        .map(|(partition, (support, sum, multi_chunk))| PartitionSummary {
            partition,
            support,
            mean_diff: sum / support as f64,
            multi_chunk,
        })
        .collect()
}

pub fn flip_analysis(
    corpus: &Corpus,
    full: &PredictionSet,
    chunked: &PredictionSet,
    r2diff: &BTreeMap<String, f64>,
) -> Result<Vec<FlipRow>, ChunkingError> {
    #[derive(Default)]
    struct Acc {
        support: usize,
        to_zero: usize,
        to_one: usize,
        pos_full: usize,
        pos_chunked: usize,
    }
    let mut cells: BTreeMap<(String, R2Partition), Acc> = BTreeMap::new();
    for r in corpus.records() {
        let Some(&diff) = r2diff.get(&r.claim_id) else {
            continue;
        };
        let missing = |which| ChunkingError::CoverageMismatch {
            which,
            claim_id: r.claim_id.clone(),
        };
        let f = full.predict(&r.claim_id).ok_or_else(|| missing("full"))?;
        let c = chunked.predict(&r.claim_id).ok_or_else(|| missing("chunked"))?;
        let acc = cells.entry((r.dataset.clone(), R2Partition::of(diff))).or_default();
        acc.support += 1;
        acc.to_zero += (f == Label::Attributable && c == Label::Unattributable) as usize;
        acc.to_one += (f == Label::Unattributable && c == Label::Attributable) as usize;
        acc.pos_full += f.is_attributable() as usize;
        acc.pos_chunked += c.is_attributable() as usize;
    }
    let frac = |k: usize, n: usize| (n > 0).then(|| k as f64 / n as f64);
    Ok(cells
        .into_iter()
        .map(|((dataset, partition), a)| FlipRow {
            dataset,
            partition,
            support: a.support,
            flips_to_zero: a.to_zero,
            flips_to_one: a.to_one,
            rate_to_zero: frac(a.to_zero, a.support),
            rate_to_one: frac(a.to_one, a.support),
            ppr_full: frac(a.pos_full, a.support),
            ppr_chunked: frac(a.pos_chunked, a.support),
        })
        .collect())
}

/// BAcc/PPR/TPR/TNR of one prediction set on the claims whose document exceeds the limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChunkingEffect {
    pub dataset: String,
    pub evaluator: String,
    pub support: u64,
    pub bacc: Option<f64>,
    pub ppr: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
}

pub fn chunking_effect(corpus: &Corpus, preds: &PredictionSet, limit: NonZeroUsize) -> Vec<ChunkingEffect> {
    let mut by_dataset: BTreeMap<&str, ConfusionCounts> = BTreeMap::new();
    for r in corpus.records() {
        if word_count(&r.document) <= limit.get() {
            continue;
        }
        if let Some(p) = preds.predict(&r.claim_id) {
            by_dataset.entry(r.dataset.as_str()).or_default().add(r.label, p);
        }
    }
    by_dataset
        .into_iter()
        .map(|(dataset, c)| {
            let r = rates(&c);
            ChunkingEffect {
                dataset: dataset.to_string(),
                evaluator: preds.evaluator.clone(),
                support: c.total(),
                bacc: r.bacc,
                ppr: positive_prediction_rate(&c),
                tpr: r.tpr,
                tnr: r.tnr,
            }
        })
        .collect()
}
