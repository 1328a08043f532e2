//! System-level error-rate estimation.
//!
//! The *error rate* of a system is the fraction of its claims (or responses) that are
//! unattributable. Bias is always `predicted − labeled`, so a negative bias means the
//! evaluator underestimates how often the system hallucinates.
//!
//! Adjusted counts treat *unattributable* as the quantified class: `recall0` is the
//! probability an unattributable claim is predicted unattributable (the TNR under the
//! attributable-positive convention used elsewhere) and `fallout0` is the probability an
//! attributable claim is predicted unattributable (the FNR).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{response_groups, Corpus, PredictionSet};
use crate::metrics::{binarize, Label};
use crate::par_map;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantifyError {
    #[error("cannot compute an error rate over an empty slice")]
    EmptySlice,
    #[error("no records carry system metadata")]
    NoSystems,
    #[error("no records carry response ids")]
    NoResponses,
    #[error("system {0:?} has no scored claims")]
    NoScoredUnits(String),
    #[error("recall0 equals fallout0 ({0}); adjusted counts are undefined")]
    DegenerateClassifier(f64),
    #[error("calibration slice has no {0} examples; recall0/fallout0 undefined")]
    UndefinedRates(&'static str),
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("calibration set contains only one class")]
    OneClassOnly,
    #[error("need at least two systems, found {0}")]
    TooFewSystems(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Claim,
    Response,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Claim => "claim",
            Level::Response => "response",
        }
    }
}

/// Fraction of unattributable entries.
pub fn error_rate(labels: &[Label]) -> Result<f64, QuantifyError> {
    if labels.is_empty() {
        return Err(QuantifyError::EmptySlice);
    }
    let errors = labels.iter().filter(|l| !l.is_attributable()).count();
    Ok(errors as f64 / labels.len() as f64)
}

/// A claim, or a response under strict aggregation: attributable only if every member is.
#[derive(Debug, Clone)]
pub(crate) struct Unit<'a> {
    pub claim_ids: Vec<&'a str>,
    pub label: Label,
}

impl Unit<'_> {
    /// `None` when any member claim is unscored.
    pub fn predicted(&self, preds: &PredictionSet) -> Option<Label> {
        let mut all = true;
        for id in &self.claim_ids {
            all &= preds.predict(id)?.is_attributable();
        }
        Some(Label::from(all))
    }
}

pub(crate) struct SystemUnits<'a> {
    pub by_system: BTreeMap<String, Vec<Unit<'a>>>,
    pub excluded_no_system: usize,
}

pub(crate) fn system_units(corpus: &Corpus, level: Level) -> Result<SystemUnits<'_>, QuantifyError> {
    let mut by_system: BTreeMap<String, Vec<Unit<'_>>> = BTreeMap::new();
    let mut excluded_no_system = 0;
    match level {
        Level::Claim => {
            for r in corpus.records() {
                match &r.system {
                    Some(s) => by_system.entry(s.clone()).or_default().push(Unit {
                        claim_ids: vec![r.claim_id.as_str()],
                        label: r.label,
                    }),
                    None => excluded_no_system += 1,
                }
            }
        }
        Level::Response => {
            let grouping = response_groups(corpus);
            if grouping.groups.is_empty() {
                return Err(QuantifyError::NoResponses);
            }
            excluded_no_system = grouping.excluded;
            for g in grouping.groups {
                let members: Vec<&str> = g
                    .member_claim_ids
                    .iter()
                    .map(|id| corpus.get(id).expect("group members come from the corpus").claim_id.as_str())
                    .collect();
                let label = Label::from(members.iter().all(|id| corpus.get(id).unwrap().label.is_attributable()));
                by_system.entry(g.system).or_default().push(Unit {
                    claim_ids: members,
                    label,
                });
            }
        }
    }
    if by_system.is_empty() {
        return Err(QuantifyError::NoSystems);
    }
    Ok(SystemUnits {
        by_system,
        excluded_no_system,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRow {
    pub system: String,
    pub labeled_rate: f64,
    pub predicted_rate: f64,
    pub bias: f64,
    /// Units behind `labeled_rate`.
    pub labeled_n: usize,
    /// Fully scored units behind `predicted_rate`.
    pub predicted_n: usize,
}

/// Lowest error rate per column; the two minima may come from different systems.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Headroom {
    pub labeled_min: f64,
    pub predicted_min: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub level: Level,
    pub evaluator: String,
    pub rows: Vec<BiasRow>,
    pub headroom: Headroom,
    /// Claims (claim level) or claims outside any response (response level) left out for lack of metadata.
    pub excluded_no_system: usize,
    /// Units left out of predicted rates because a member claim is unscored.
    pub excluded_unscored: usize,
}

/// Labeled vs predicted error rate per system.
///
/// Labeled rates use every unit of a system; predicted rates use only fully scored units.
pub fn system_bias(corpus: &Corpus, preds: &PredictionSet, level: Level) -> Result<BiasReport, QuantifyError> {
    let units = system_units(corpus, level)?;
    let mut rows = Vec::with_capacity(units.by_system.len());
    let mut excluded_unscored = 0;
    for (system, list) in &units.by_system {
        let gold: Vec<Label> = list.iter().map(|u| u.label).collect();
        let predicted: Vec<Label> = list.iter().filter_map(|u| u.predicted(preds)).collect();
        excluded_unscored += list.len() - predicted.len();
        if predicted.is_empty() {
            return Err(QuantifyError::NoScoredUnits(system.clone()));
        }
        let labeled_rate = error_rate(&gold)?;
        let predicted_rate = error_rate(&predicted)?;
        rows.push(BiasRow {
            system: system.clone(),
            labeled_rate,
            predicted_rate,
            bias: predicted_rate - labeled_rate,
            labeled_n: gold.len(),
            predicted_n: predicted.len(),
        });
    }
    let labeled_min = rows.iter().map(|r| r.labeled_rate).fold(f64::INFINITY, f64::min);
    let predicted_min = rows.iter().map(|r| r.predicted_rate).fold(f64::INFINITY, f64::min);
    Ok(BiasReport {
        level,
        evaluator: preds.evaluator.clone(),
        rows,
        headroom: Headroom {
            labeled_min,
            predicted_min,
            bias: predicted_min - labeled_min,
        },
        excluded_no_system: units.excluded_no_system,
        excluded_unscored,
    })
}

/// Adjusted-count prevalence estimate `clip((p0 − fallout0) / (recall0 − fallout0), 0, 1)`.
pub fn adjusted_count(p0: f64, recall0: f64, fallout0: f64) -> Result<f64, QuantifyError> {
    if recall0 == fallout0 {
        return Err(QuantifyError::DegenerateClassifier(recall0));
    }
    Ok(((p0 - fallout0) / (recall0 - fallout0)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TuningObjective {
    ZeroBias,
    MaxBAcc,
}

/// Candidate thresholds: 0, 1, and midpoints between consecutive distinct scores, ascending.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(0.0);
    out.extend(sorted.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    out.push(1.0);
    out.dedup();
    out
}

/// Picks the threshold optimizing `objective` on a labeled calibration sample.
///
/// Ties on the primary objective go to the other objective (BAcc for zero bias, |bias| for
/// max BAcc), then to the lower threshold. Both objectives are compared in integer
/// arithmetic so ties are exact.
pub fn tune_threshold(samples: &[(f64, Label)], objective: TuningObjective) -> Result<f64, QuantifyError> {
    if samples.is_empty() {
        return Err(QuantifyError::EmptyCalibration);
    }
    let mut sorted: Vec<(f64, Label)> = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len() as i64;
    let neg = sorted.iter().filter(|s| !s.1.is_attributable()).count() as i64;
    let pos = n - neg;
    if objective == TuningObjective::MaxBAcc && (pos == 0 || neg == 0) {
        return Err(QuantifyError::OneClassOnly);
    }
    let scores: Vec<f64> = sorted.iter().map(|s| s.0).collect();

    // Key components: smaller |pred0 − lab0| and larger tp·N + tn·P are better.
    let mut best: Option<(i64, Option<i64>, f64)> = None;
    let (mut below, mut true_neg, mut false_neg) = (0usize, 0i64, 0i64);
    for t in candidate_thresholds(&scores) {
        while below < sorted.len() && sorted[below].0 < t {
            if sorted[below].1.is_attributable() {
                false_neg += 1;
            } else {
                true_neg += 1;
            }
            below += 1;
        }
        let abs_bias = (below as i64 - neg).abs();
        let bacc = (pos > 0 && neg > 0).then(|| (pos - false_neg) * neg + true_neg * pos);
        let better = match &best {
            None => true,
            Some((b_bias, b_bacc, _)) => match objective {
                TuningObjective::ZeroBias => abs_bias < *b_bias || (abs_bias == *b_bias && bacc > *b_bacc),
                TuningObjective::MaxBAcc => bacc > *b_bacc || (bacc == *b_bacc && abs_bias < *b_bias),
            },
        };
        if better {
            best = Some((abs_bias, bacc, t));
        }
    }
    Ok(best.expect("candidate list is never empty").2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CalibrationMethod {
    /// Baseline: the evaluator's own threshold, no correction.
    NoAdjustment,
    AdjustedCounts,
    TuneZeroBias,
    TuneMaxBAcc,
}

impl CalibrationMethod {
    pub const ALL: [CalibrationMethod; 4] = [
        CalibrationMethod::NoAdjustment,
        CalibrationMethod::AdjustedCounts,
        CalibrationMethod::TuneZeroBias,
        CalibrationMethod::TuneMaxBAcc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CalibrationMethod::NoAdjustment => "no_adjustment",
            CalibrationMethod::AdjustedCounts => "adjusted_counts",
            CalibrationMethod::TuneZeroBias => "tune_zero_bias",
            CalibrationMethod::TuneMaxBAcc => "tune_max_bacc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Fitted {
    Threshold { threshold: f64 },
    Rates { recall0: f64, fallout0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub method: CalibrationMethod,
    pub calibration_system: String,
    /// Labeled error rate of the calibration system.
    pub calibration_error_rate: f64,
    pub fitted: Fitted,
    pub holdout_bias: BTreeMap<String, f64>,
    pub mean_abs_bias: f64,
    pub worst_abs_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FoldOutcome {
    Fitted(CalibrationResult),
    Failed { calibration_system: String, reason: String },
}

impl FoldOutcome {
    pub fn calibration_system(&self) -> &str {
        match self {
            FoldOutcome::Fitted(r) => &r.calibration_system,
            FoldOutcome::Failed { calibration_system, .. } => calibration_system,
        }
    }

    pub fn result(&self) -> Option<&CalibrationResult> {
        match self {
            FoldOutcome::Fitted(r) => Some(r),
            FoldOutcome::Failed { .. } => None,
        }
    }
}

/// Leave-one-system-in calibration: fit on one system, measure bias on all the others.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValidation {
    pub method: CalibrationMethod,
    pub evaluator: String,
    pub folds: Vec<FoldOutcome>,
    /// Averages over successful folds; `None` when every fold failed.
    pub mean_abs_bias: Option<f64>,
    pub worst_abs_bias: Option<f64>,
}

struct SystemSample {
    name: String,
    samples: Vec<(f64, Label)>,
    labeled_rate: f64,
}

fn predicted_rate_at(samples: &[(f64, Label)], threshold: f64) -> f64 {
    let zeros = samples.iter().filter(|(s, _)| !binarize(*s, threshold).is_attributable()).count();
    zeros as f64 / samples.len() as f64
}

fn fit_fold(sys: &SystemSample, all: &[SystemSample], method: CalibrationMethod, base: f64) -> Result<CalibrationResult, QuantifyError> {
    let fitted = match method {
        CalibrationMethod::NoAdjustment => Fitted::Threshold { threshold: base },
        CalibrationMethod::TuneZeroBias => Fitted::Threshold {
            threshold: tune_threshold(&sys.samples, TuningObjective::ZeroBias)?,
        },
        CalibrationMethod::TuneMaxBAcc => Fitted::Threshold {
            threshold: tune_threshold(&sys.samples, TuningObjective::MaxBAcc)?,
        },
        CalibrationMethod::AdjustedCounts => {
            let (mut neg, mut neg_as_zero, mut pos, mut pos_as_zero) = (0usize, 0usize, 0usize, 0usize);
            for &(s, l) in &sys.samples {
                let zero = !binarize(s, base).is_attributable();
                if l.is_attributable() {
                    pos += 1;
                    pos_as_zero += zero as usize;
                } else {
                    neg += 1;
                    neg_as_zero += zero as usize;
                }
            }
            if neg == 0 {
                return Err(QuantifyError::UndefinedRates("unattributable"));
            }
            if pos == 0 {
                return Err(QuantifyError::UndefinedRates("attributable"));
            }
            let recall0 = neg_as_zero as f64 / neg as f64;
            let fallout0 = pos_as_zero as f64 / pos as f64;
            if recall0 == fallout0 {
                return Err(QuantifyError::DegenerateClassifier(recall0));
            }
            Fitted::Rates { recall0, fallout0 }
        }
    };
    let mut holdout_bias = BTreeMap::new();
    for other in all.iter().filter(|o| o.name != sys.name) {
        let estimate = match fitted {
            Fitted::Threshold { threshold } => predicted_rate_at(&other.samples, threshold),
            Fitted::Rates { recall0, fallout0 } => adjusted_count(predicted_rate_at(&other.samples, base), recall0, fallout0)?,
        };
        holdout_bias.insert(other.name.clone(), estimate - other.labeled_rate);
    }
    let abs: Vec<f64> = holdout_bias.values().map(|b| b.abs()).collect();
    Ok(CalibrationResult {
        method,
        calibration_system: sys.name.clone(),
        calibration_error_rate: sys.labeled_rate,
        fitted,
        mean_abs_bias: abs.iter().sum::<f64>() / abs.len() as f64,
        worst_abs_bias: abs.iter().copied().fold(0.0, f64::max),
        holdout_bias,
    })
}

/// Claim-level cross-validated calibration of `preds` on `corpus`.
pub fn cross_validate_calibration(corpus: &Corpus, preds: &PredictionSet, method: CalibrationMethod) -> Result<CrossValidation, QuantifyError> {
    let units = system_units(corpus, Level::Claim)?;
    let mut systems = Vec::new();
    for (name, list) in &units.by_system {
        let samples: Vec<(f64, Label)> = list
            .iter()
            .filter_map(|u| preds.score(u.claim_ids[0]).map(|s| (s, u.label)))
            .collect();
        if samples.is_empty() {
            return Err(QuantifyError::NoScoredUnits(name.clone()));
        }
        let gold: Vec<Label> = samples.iter().map(|s| s.1).collect();
        systems.push(SystemSample {
            name: name.clone(),
            labeled_rate: error_rate(&gold)?,
            samples,
        });
    }
    if systems.len() < 2 {
        return Err(QuantifyError::TooFewSystems(systems.len()));
    }
    let folds: Vec<FoldOutcome> = par_map(&systems, |sys| match fit_fold(sys, &systems, method, preds.threshold) {
        Ok(r) => FoldOutcome::Fitted(r),
        Err(e) => FoldOutcome::Failed {
            calibration_system: sys.name.clone(),
            reason: e.to_string(),
        },
    });
    let ok: Vec<&CalibrationResult> = folds.iter().filter_map(FoldOutcome::result).collect();
    let avg = |f: fn(&CalibrationResult) -> f64| (!ok.is_empty()).then(|| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64);
    Ok(CrossValidation {
        method,
        evaluator: preds.evaluator.clone(),
        mean_abs_bias: avg(|r| r.mean_abs_bias),
        worst_abs_bias: avg(|r| r.worst_abs_bias),
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::record;
    use crate::corpus::ClaimRecord;
    use Label::*;

    fn l(v: &[u8]) -> Vec<Label> {
        v.iter().map(|&x| Label::from_u8(x).unwrap()).collect()
    }

    #[test]
    fn error_rate_examples() {
        assert_eq!(error_rate(&l(&[0, 0, 1, 1])), Ok(0.5));
        assert_eq!(error_rate(&l(&[1, 1, 1])), Ok(0.0));
        assert_eq!(error_rate(&[]), Err(QuantifyError::EmptySlice));
    }

    /// `n` claims for `system`, the first `gold0` labeled 0 and the first `pred0` predicted 0.
    fn system_fixture(system: &str, n: usize, gold0: usize, pred0: usize) -> (Vec<ClaimRecord>, Vec<(String, f64)>) {
        let mut recs = Vec::new();
        let mut scores = Vec::new();
        for i in 0..n {
            let id = format!("{system}-{i:04}");
            recs.push(record(&id, "D", Some(system), None, (i >= gold0) as u8));
            scores.push((id, if i < pred0 { 0.1 } else { 0.9 }));
        }
        (recs, scores)
    }

    fn build(parts: &[(&str, usize, usize, usize)]) -> (Corpus, PredictionSet) {
        let mut recs = Vec::new();
        let mut scores = BTreeMap::new();
        for &(s, n, g, p) in parts {
            let (r, sc) = system_fixture(s, n, g, p);
            recs.extend(r);
            scores.extend(sc);
        }
        (Corpus::new("t", recs).unwrap(), PredictionSet::new("e", scores, 0.5).unwrap())
    }

    #[test]
    fn claim_level_bias_and_headroom() {
        let (corpus, preds) = build(&[("Model-Extra", 1000, 192, 63), ("model_D", 1000, 186, 112)]);
        let rep = system_bias(&corpus, &preds, Level::Claim).unwrap();
        let extra = &rep.rows[0];
        assert_eq!(extra.system, "Model-Extra");
        assert!((extra.labeled_rate - 0.192).abs() < 1e-12);
        assert!((extra.predicted_rate - 0.063).abs() < 1e-12);
        assert!((extra.bias + 0.129).abs() < 1e-12);
        assert!((rep.headroom.labeled_min - 0.186).abs() < 1e-12);
        assert!((rep.headroom.predicted_min - 0.063).abs() < 1e-12);
        assert!((rep.headroom.bias + 0.123).abs() < 1e-12);
    }

    #[test]
    fn response_level_uses_strict_aggregation() {
        let recs = vec![
            record("a1", "D", Some("s"), Some("r1"), 1),
            record("a2", "D", Some("s"), Some("r1"), 0),
            record("b1", "D", Some("s"), Some("r2"), 1),
            record("b2", "D", Some("s"), Some("r2"), 1),
            record("c1", "D", Some("t"), Some("r3"), 1),
        ];
        let corpus = Corpus::new("t", recs).unwrap();
        let scores: BTreeMap<String, f64> = [("a1", 0.9), ("a2", 0.9), ("b1", 0.2), ("b2", 0.9), ("c1", 0.9)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let preds = PredictionSet::new("e", scores, 0.5).unwrap();
        let rep = system_bias(&corpus, &preds, Level::Response).unwrap();
        assert_eq!(rep.rows[0].labeled_rate, 0.5);
        assert_eq!(rep.rows[0].predicted_rate, 0.5);
        assert_eq!(rep.rows[1].labeled_rate, 0.0);
        assert_eq!(rep.headroom.bias, 0.0);
    }

    #[test]
    fn perfect_predictor_has_zero_bias() {
        let (corpus, preds) = build(&[("a", 50, 10, 10), ("b", 40, 25, 25)]);
        for level in [Level::Claim] {
            let rep = system_bias(&corpus, &preds, level).unwrap();
            assert!(rep.rows.iter().all(|r| r.bias == 0.0));
            assert_eq!(rep.headroom.bias, 0.0);
        }
    }

    #[test]
    fn missing_metadata_errors() {
        let corpus = Corpus::new("t", vec![record("a", "D", None, None, 1)]).unwrap();
        let preds = PredictionSet::new("e", BTreeMap::from([("a".to_string(), 1.0)]), 0.5).unwrap();
        assert_eq!(system_bias(&corpus, &preds, Level::Claim), Err(QuantifyError::NoSystems));
        assert_eq!(system_bias(&corpus, &preds, Level::Response), Err(QuantifyError::NoResponses));
    }

    #[test]
    fn responses_with_unscored_claims_are_excluded() {
        let recs = vec![
            record("a1", "D", Some("s"), Some("r1"), 1),
            record("a2", "D", Some("s"), Some("r1"), 0),
            record("b1", "D", Some("s"), Some("r2"), 1),
        ];
        let corpus = Corpus::new("t", recs).unwrap();
        let preds = PredictionSet::new("e", BTreeMap::from([("a1".to_string(), 0.9), ("b1".to_string(), 0.9)]), 0.5).unwrap();
        let rep = system_bias(&corpus, &preds, Level::Response).unwrap();
        assert_eq!(rep.excluded_unscored, 1);
        assert_eq!(rep.rows[0].labeled_n, 2);
        assert_eq!(rep.rows[0].predicted_n, 1);
    }

    #[test]
    fn adjusted_count_examples() {
        assert_eq!(adjusted_count(0.1, 0.9, 0.1), Ok(0.0));
        assert_eq!(adjusted_count(0.9, 0.9, 0.1), Ok(1.0));
        assert!((adjusted_count(0.5, 0.9, 0.1).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(adjusted_count(0.0, 0.9, 0.1), Ok(0.0));
        assert!(matches!(adjusted_count(0.5, 0.3, 0.3), Err(QuantifyError::DegenerateClassifier(_))));
    }

    #[test]
    fn adjusted_count_inverts_the_mixture() {
        for (recall0, fallout0) in [(0.9, 0.1), (0.85, 0.10), (0.6, 0.4), (1.0, 0.0)] {
            for i in 0..=100 {
                let p = i as f64 / 100.0;
                let p0 = recall0 * p + fallout0 * (1.0 - p);
                assert!((adjusted_count(p0, recall0, fallout0).unwrap() - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tuning_examples() {
        let s = [(0.2, Unattributable), (0.8, Attributable)];
        assert_eq!(tune_threshold(&s, TuningObjective::ZeroBias), Ok(0.5));
        assert_eq!(tune_threshold(&s, TuningObjective::MaxBAcc), Ok(0.5));

        let all_pos = [(0.3, Attributable), (0.7, Attributable)];
        assert_eq!(tune_threshold(&all_pos, TuningObjective::ZeroBias), Ok(0.0));
        assert_eq!(tune_threshold(&all_pos, TuningObjective::MaxBAcc), Err(QuantifyError::OneClassOnly));
        assert_eq!(tune_threshold(&[], TuningObjective::ZeroBias), Err(QuantifyError::EmptyCalibration));
    }

    #[test]
    fn zero_bias_breaks_ties_by_bacc() {
        // t=0.35 and t=0.65 both predict one zero (|bias| 0); only 0.35 predicts the right one.
        let s = [(0.3, Unattributable), (0.4, Attributable), (0.9, Attributable)];
        assert_eq!(tune_threshold(&s, TuningObjective::ZeroBias), Ok(0.35));
        // Here the lower-bias threshold loses on BAcc.
        let s = [(0.3, Attributable), (0.4, Unattributable), (0.9, Attributable)];
        assert_eq!(tune_threshold(&s, TuningObjective::MaxBAcc), Ok(0.65));
        assert_eq!(tune_threshold(&s, TuningObjective::ZeroBias), Ok(0.35));
    }

    #[test]
    fn candidate_grid() {
        assert_eq!(candidate_thresholds(&[0.8, 0.2, 0.2]), vec![0.0, 0.5, 1.0]);
        assert_eq!(candidate_thresholds(&[]), vec![0.0, 1.0]);
    }

    #[test]
    fn symmetric_systems_calibrate_to_zero_bias() {
        let (corpus, preds) = build(&[("a", 100, 20, 35), ("b", 100, 20, 35)]);
        // Spread scores so tuning has something to do: rescore with distinct values.
        let scores: BTreeMap<String, f64> = preds
            .scores
            .keys()
            .map(|id| {
                let i: usize = id[2..].parse().unwrap();
                (id.clone(), (i as f64 + 0.5) / 100.0)
            })
            .collect();
        let preds = PredictionSet::new("e", scores, 0.5).unwrap();
        let cv = cross_validate_calibration(&corpus, &preds, CalibrationMethod::TuneZeroBias).unwrap();
        assert_eq!(cv.folds.len(), 2);
        for f in &cv.folds {
            let r = f.result().unwrap();
            assert!(r.holdout_bias.values().all(|b| b.abs() < 1e-12));
        }
        let base = cross_validate_calibration(&corpus, &preds, CalibrationMethod::NoAdjustment).unwrap();
        assert!((base.mean_abs_bias.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn adjusted_counts_fold_fails_without_unattributable_claims() {
        let (corpus, preds) = build(&[("clean", 50, 0, 5), ("noisy", 50, 20, 15), ("mid", 50, 10, 10)]);
        let cv = cross_validate_calibration(&corpus, &preds, CalibrationMethod::AdjustedCounts).unwrap();
        let clean = cv.folds.iter().find(|f| f.calibration_system() == "clean").unwrap();
        assert!(matches!(clean, FoldOutcome::Failed { .. }));
        let noisy = cv.folds.iter().find(|f| f.calibration_system() == "noisy").unwrap();
        assert!(noisy.result().is_some());
        assert!(cv.mean_abs_bias.is_some());
    }

    #[test]
    fn single_system_is_rejected() {
        let (corpus, preds) = build(&[("only", 10, 3, 3)]);
        assert_eq!(
            cross_validate_calibration(&corpus, &preds, CalibrationMethod::TuneZeroBias),
            Err(QuantifyError::TooFewSystems(1))
        );
    }
}
