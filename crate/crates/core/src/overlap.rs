//! Surface-overlap diagnostics: ROUGE-2 precision of a claim against its document,
//! percentile binning within task groups, and per-bin TPR/TNR.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::corpus::{Corpus, PredictionSet, TaskGroup};
use crate::metrics::{rates, ConfusionCounts, RateBreakdown};
use crate::par_map;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OverlapError {
    #[error("task group {0} has no values to bin")]
    EmptyGroup(TaskGroup),
    #[error("bin count must be at least 1")]
    NoBins,
    #[error("evaluator {evaluator:?} has no score for binned claim {claim_id:?}")]
    CoverageMismatch { evaluator: String, claim_id: String },
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Multiset of adjacent token pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BigramCounts {
    counts: HashMap<String, u32>,
    total: u32,
}

impl BigramCounts {
    pub fn from_tokens(tokens: &[String]) -> Self {
        let mut counts = HashMap::new();
        for w in tokens.windows(2) {
            // Tokens are alphanumeric, so a space keeps keys unambiguous.
            *counts.entry(format!("{} {}", w[0], w[1])).or_insert(0) += 1;
        }
        Self {
            counts,
            total: tokens.len().saturating_sub(1) as u32,
        }
    }

    pub fn from_text(text: &str) -> Self {
        Self::from_tokens(&tokenize(text))
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn get(&self, bigram: &str) -> u32 {
        self.counts.get(bigram).copied().unwrap_or(0)
    }

    /// Clipped matches: `Σ min(self[b], reference[b])`.
    pub fn clipped_matches(&self, reference: &BigramCounts) -> u32 {
        self.counts.iter().map(|(b, &c)| c.min(reference.get(b))).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rouge2 {
    pub precision: f64,
    pub matched: u32,
    pub total: u32,
    /// Claim has fewer than two tokens; precision is reported as 0.
    pub degenerate: bool,
}

pub fn rouge2_against(claim: &BigramCounts, document: &BigramCounts) -> Rouge2 {
    if claim.total() == 0 {
        return Rouge2 {
            precision: 0.0,
            matched: 0,
            total: 0,
            degenerate: true,
        };
    }
    let matched = claim.clipped_matches(document);
    Rouge2 {
        precision: matched as f64 / claim.total() as f64,
        matched,
        total: claim.total(),
        degenerate: false,
    }
}

/// Fraction of claim bigrams found in the document, with count clipping.
pub fn rouge2_precision(claim: &str, document: &str) -> Rouge2 {
    rouge2_against(&BigramCounts::from_text(claim), &BigramCounts::from_text(document))
}

/// Token ids for one document and the claims scored against it. Bigrams become `u64`
/// keys, so bulk scoring avoids a string per bigram.
#[derive(Default)]
pub(crate) struct Vocab {
    ids: HashMap<String, u32>,
    buf: String,
}

impl Vocab {
    pub fn ids(&mut self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for t in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            self.buf.clear();
            self.buf.extend(t.chars().flat_map(char::to_lowercase));
            let next = self.ids.len() as u32;
            let id = match self.ids.get(self.buf.as_str()) {
                Some(&id) => id,
                None => {
                    self.ids.insert(self.buf.clone(), next);
                    next
                }
            };
            out.push(id);
        }
        out
    }
}

pub(crate) type PairCounts = HashMap<u64, u32>;

pub(crate) fn pair_counts(ids: &[u32]) -> PairCounts {
    let mut counts = HashMap::with_capacity(ids.len());
    for w in ids.windows(2) {
        *counts.entry(((w[0] as u64) << 32) | w[1] as u64).or_insert(0) += 1;
    }
    counts
}

pub(crate) fn rouge2_ids(claim: &PairCounts, claim_len: usize, document: &PairCounts) -> Rouge2 {
    let total = claim_len.saturating_sub(1) as u32;
    if total == 0 {
        return Rouge2 {
            precision: 0.0,
            matched: 0,
            total: 0,
            degenerate: true,
        };
    }
    let matched = claim.iter().map(|(b, &c)| c.min(document.get(b).copied().unwrap_or(0))).sum();
    Rouge2 {
        precision: matched as f64 / total as f64,
        matched,
        total,
        degenerate: false,
    }
}

/// Record indices grouped by document text, in document order.
pub(crate) fn by_document(corpus: &Corpus) -> Vec<(&str, Vec<usize>)> {
    let mut by_doc: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in corpus.records().iter().enumerate() {
        by_doc.entry(r.document.as_str()).or_default().push(i);
    }
    by_doc.into_iter().collect()
}

/// ROUGE-2 precision for every claim in the corpus. Documents shared by several claims
/// are tokenized once.
pub fn rouge2_by_claim(corpus: &Corpus) -> BTreeMap<String, Rouge2> {
    let docs = by_document(corpus);
    let records = corpus.records();
    let scored = par_map(&docs, |(doc, idx)| {
        let mut vocab = Vocab::default();
        let doc_counts = pair_counts(&vocab.ids(doc));
        idx.iter()
            .map(|&i| {
                let claim = vocab.ids(&records[i].claim);
                (records[i].claim_id.clone(), rouge2_ids(&pair_counts(&claim), claim.len(), &doc_counts))
            })
            .collect::<Vec<_>>()
    });
    scored.into_iter().flatten().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinAssignment {
    pub task_group: TaskGroup,
    /// Upper (inclusive) edges of bins `0..k-1`; the last bin is open-ended.
    pub bin_edges: Vec<f64>,
    pub assignment: BTreeMap<String, usize>,
}

impl BinAssignment {
    pub fn bin_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.bin_edges.len() + 1];
        for &b in self.assignment.values() {
            sizes[b] += 1;
        }
        sizes
    }
}

/// Nearest-rank percentile edges at `i/k` for `i = 1..k`, over ascending `sorted`.
pub fn nearest_rank_edges(sorted: &[f64], k: usize) -> Vec<f64> {
    let n = sorted.len();
    (1..k)
        .map(|i| {
            let rank = (i * n).div_ceil(k).max(1);
            sorted[rank - 1]
        })
        .collect()
}

/// Smallest bin whose edge is `>= v`, else the last bin.
pub fn bin_of(v: f64, edges: &[f64]) -> usize {
    edges.iter().position(|&e| v <= e).unwrap_or(edges.len())
}

/// Per task group, splits claims into `k` percentile bins of `values`.
pub fn assign_bins(corpus: &Corpus, values: &BTreeMap<String, f64>, k: usize) -> Result<Vec<BinAssignment>, OverlapError> {
    if k == 0 {
        return Err(OverlapError::NoBins);
    }
    let mut groups: BTreeMap<TaskGroup, Vec<(&str, f64)>> = BTreeMap::new();
    for r in corpus.records() {
        let entry = groups.entry(r.task_group).or_default();
        if let Some(&v) = values.get(&r.claim_id) {
            entry.push((r.claim_id.as_str(), v));
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for (task_group, members) in groups {
        if members.is_empty() {
            return Err(OverlapError::EmptyGroup(task_group));
        }
        let mut sorted: Vec<f64> = members.iter().map(|m| m.1).collect();
        sorted.sort_by(f64::total_cmp);
        let bin_edges = nearest_rank_edges(&sorted, k);
        let assignment = members
            .iter()
            .map(|&(id, v)| (id.to_string(), bin_of(v, &bin_edges)))
            .collect();
        out.push(BinAssignment {
            task_group,
            bin_edges,
            assignment,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinRates {
    pub task_group: TaskGroup,
    pub bin: usize,
    pub counts: ConfusionCounts,
    pub rates: RateBreakdown,
}

pub fn bin_rates(bins: &BinAssignment, corpus: &Corpus, preds: &PredictionSet) -> Result<Vec<BinRates>, OverlapError> {
    let mut counts = vec![ConfusionCounts::default(); bins.bin_edges.len() + 1];
    for (id, &bin) in &bins.assignment {
        let record = corpus.get(id).ok_or_else(|| OverlapError::CoverageMismatch {
            evaluator: preds.evaluator.clone(),
            claim_id: id.clone(),
        })?;
        let pred = preds.predict(id).ok_or_else(|| OverlapError::CoverageMismatch {
            evaluator: preds.evaluator.clone(),
            claim_id: id.clone(),
        })?;
        counts[bin].add(record.label, pred);
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(bin, c)| BinRates {
            task_group: bins.task_group,
            bin,
            rates: rates(&c),
            counts: c,
        })
        .collect())
}
