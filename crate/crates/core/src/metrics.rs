//! Confusion counts and TPR/TNR/FPR/FNR/BAcc breakdowns.
//!
//! The positive class is *attributable* (label 1) throughout.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, PredictionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Unattributable,
    Attributable,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Unattributable => 0,
            Label::Attributable => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Unattributable),
            1 => Some(Label::Attributable),
            _ => None,
        }
    }

    pub fn is_attributable(self) -> bool {
        self == Label::Attributable
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Unattributable => Label::Attributable,
            Label::Attributable => Label::Unattributable,
        }
    }
}

impl From<bool> for Label {
    fn from(attributable: bool) -> Self {
        if attributable {
            Label::Attributable
        } else {
            Label::Unattributable
        }
    }
}

/// `score >= threshold` is attributable.
pub fn binarize(score: f64, threshold: f64) -> Label {
    Label::from(score >= threshold)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("label and prediction sequences differ in length ({labels} vs {preds})")]
    LengthMismatch { labels: usize, preds: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, label: Label, pred: Label) {
        match (label, pred) {
            (Label::Attributable, Label::Attributable) => self.true_pos += 1,
            (Label::Attributable, Label::Unattributable) => self.false_neg += 1,
            (Label::Unattributable, Label::Unattributable) => self.true_neg += 1,
            (Label::Unattributable, Label::Attributable) => self.false_pos += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn support_pos(&self) -> u64 {
        self.true_pos + self.false_neg
    }

    pub fn support_neg(&self) -> u64 {
        self.true_neg + self.false_pos
    }

    /// Counts under the opposite positive-class convention.
    pub fn swap_classes(&self) -> ConfusionCounts {
        ConfusionCounts {
            true_pos: self.true_neg,
            false_pos: self.false_neg,
            true_neg: self.true_pos,
            false_neg: self.false_pos,
        }
    }

    pub fn scaled(&self, k: u64) -> ConfusionCounts {
        ConfusionCounts {
            true_pos: self.true_pos * k,
            false_pos: self.false_pos * k,
            true_neg: self.true_neg * k,
            false_neg: self.false_neg * k,
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.true_pos += rhs.true_pos;
        self.false_pos += rhs.false_pos;
        self.true_neg += rhs.true_neg;
        self.false_neg += rhs.false_neg;
    }
}

pub fn confusion(labels: &[Label], preds: &[Label]) -> Result<ConfusionCounts, MetricsError> {
    if labels.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            preds: preds.len(),
        });
    }
    let mut counts = ConfusionCounts::default();
    for (&l, &p) in labels.iter().zip(preds) {
        counts.add(l, p);
    }
    Ok(counts)
}

/// Rates for one slice. `None` means undefined (zero support), which is not the same as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub bacc: Option<f64>,
    pub support_pos: u64,
    pub support_neg: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn rates(counts: &ConfusionCounts) -> RateBreakdown {
    let tpr = ratio(counts.true_pos, counts.support_pos());
    let tnr = ratio(counts.true_neg, counts.support_neg());
    RateBreakdown {
        tpr,
        tnr,
        fpr: tnr.map(|r| 1.0 - r),
        fnr: tpr.map(|r| 1.0 - r),
        bacc: tpr.zip(tnr).map(|(p, n)| (p + n) / 2.0),
        support_pos: counts.support_pos(),
        support_neg: counts.support_neg(),
    }
}

/// Fraction of predictions that are attributable.
pub fn positive_prediction_rate(counts: &ConfusionCounts) -> Option<f64> {
    ratio(counts.true_pos + counts.false_pos, counts.total())
}

/// Confusion counts of `preds` over the records of `corpus` it scores. Unscored claims are skipped.
pub fn corpus_confusion(corpus: &Corpus, preds: &PredictionSet) -> ConfusionCounts {
    let mut counts = ConfusionCounts::default();
    for r in corpus.records() {
        if let Some(p) = preds.predict(&r.claim_id) {
            counts.add(r.label, p);
        }
    }
    counts
}

/// Mean of the defined values, `None` if there are none.
pub fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}
