//! Pairwise evaluator agreement measured as intersection-over-union of the
//! claim sets each evaluator assigns a given label.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::corpus::{Corpus, PredictionSet};
use crate::metrics::Label;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConsistencyError {
    #[error("evaluator {evaluator:?} has no score for claim {claim_id:?}")]
    CoverageMismatch { evaluator: String, claim_id: String },
}

/// `|A ∩ B| / |A ∪ B|`, undefined when both sets are empty.
pub fn iou<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Option<f64> {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    (union > 0).then(|| inter as f64 / union as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyMatrix {
    pub evaluators: Vec<String>,
    pub target_label: Label,
    /// Dataset the matrix was computed on, `None` for the whole corpus.
    pub dataset: Option<String>,
    pub set_sizes: Vec<usize>,
    pub iou: Vec<Vec<Option<f64>>>,
}

/// IoU of `{claim : prediction == target}` for every evaluator pair, restricted to `dataset` if given.
pub fn pairwise_consistency(
    preds: &[PredictionSet],
    corpus: &Corpus,
    target: Label,
    dataset: Option<&str>,
) -> Result<ConsistencyMatrix, ConsistencyError> {
    let slice: Vec<_> = corpus
        .records()
        .iter()
        .filter(|r| dataset.map_or(true, |d| r.dataset == d))
        .collect();
    let mut sets = Vec::with_capacity(preds.len());
    for p in preds {
        let mut set = BTreeSet::new();
        for r in &slice {
            let pred = p.predict(&r.claim_id).ok_or_else(|| ConsistencyError::CoverageMismatch {
                evaluator: p.evaluator.clone(),
                claim_id: r.claim_id.clone(),
            })?;
            if pred == target {
                set.insert(r.claim_id.as_str());
            }
        }
        sets.push(set);
    }
    let n = sets.len();
    let mut matrix = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = iou(&sets[i], &sets[j]);
            matrix[i][j] = v;
            matrix[j][i] = v;
        }
    }
    Ok(ConsistencyMatrix {
        evaluators: preds.iter().map(|p| p.evaluator.clone()).collect(),
        target_label: target,
        dataset: dataset.map(str::to_string),
        set_sizes: sets.iter().map(BTreeSet::len).collect(),
        iou: matrix,
    })
}
