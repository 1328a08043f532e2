//! Significance-tested system orderings and rank correlations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, PredictionSet};
use crate::quantify::{system_units, Level, QuantifyError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RankError {
    #[error("invalid counts: k1={k1}, n1={n1}, k2={k2}, n2={n2}")]
    InvalidCounts { k1: u64, n1: u64, k2: u64, n2: u64 },
    #[error("need at least two systems, found {0}")]
    TooFewSystems(usize),
    #[error("decision sets cover different system pairs")]
    PairSetMismatch,
    #[error("sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("a sequence has zero variance")]
    ZeroVariance,
    #[error(transparent)]
    Quantify(#[from] QuantifyError),
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided tail probability `P(|Z| ≥ |z|)`.
pub fn two_sided_p(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variance {
    #[default]
    Pooled,
    Unpooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZTest {
    pub z: f64,
    pub p_value: f64,
}

/// Pooled two-proportion z-test of `k1/n1` against `k2/n2`.
pub fn two_prop_ztest(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<ZTest, RankError> {
    two_prop_ztest_with(k1, n1, k2, n2, Variance::Pooled)
}

pub fn two_prop_ztest_with(k1: u64, n1: u64, k2: u64, n2: u64, variance: Variance) -> Result<ZTest, RankError> {
    if n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2 {
        return Err(RankError::InvalidCounts { k1, n1, k2, n2 });
    }
    let (p1, p2) = (k1 as f64 / n1 as f64, k2 as f64 / n2 as f64);
    let var = match variance {
        Variance::Pooled => {
            let p = (k1 + k2) as f64 / (n1 + n2) as f64;
            p * (1.0 - p) * (1.0 / n1 as f64 + 1.0 / n2 as f64)
        }
        Variance::Unpooled => p1 * (1.0 - p1) / n1 as f64 + p2 * (1.0 - p2) / n2 as f64,
    };
    let diff = p1 - p2;
    if var <= 0.0 {
        // Only reachable unpooled with p1, p2 ∈ {0, 1}.
        return Ok(if diff == 0.0 {
            ZTest { z: 0.0, p_value: 1.0 }
        } else {
            ZTest {
                z: diff.signum() * f64::INFINITY,
                p_value: 0.0,
            }
        });
    }
    let z = diff / var.sqrt();
    Ok(ZTest {
        z,
        p_value: two_sided_p(z),
    })
}

/// Error rate of `system_a` relative to `system_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Direction {
    Lower,
    Indistinguishable,
    Higher,
}

impl Direction {
    fn index(self) -> usize {
        match self {
            Direction::Lower => 0,
            Direction::Indistinguishable => 1,
            Direction::Higher => 2,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Direction::Lower => "<",
            Direction::Indistinguishable => "=",
            Direction::Higher => ">",
        }
    }

    pub const ALL: [Direction; 3] = [Direction::Lower, Direction::Indistinguishable, Direction::Higher];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankDecision {
    pub system_a: String,
    pub system_b: String,
    pub rate_a: f64,
    pub rate_b: f64,
    pub direction: Direction,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum LabelSource<'a> {
    Gold,
    Predicted(&'a PredictionSet),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankOptions {
    pub alpha: f64,
    pub level: Level,
    pub variance: Variance,
}

impl Default for RankOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            level: Level::Claim,
            variance: Variance::Pooled,
        }
    }
}

/// `(errors, total)` per system under `source`; unscored units are skipped for predictions.
pub fn system_error_counts(corpus: &Corpus, source: LabelSource<'_>, level: Level) -> Result<BTreeMap<String, (u64, u64)>, RankError> {
    let units = system_units(corpus, level)?;
    let mut out = BTreeMap::new();
    for (system, list) in units.by_system {
        let (mut errors, mut total) = (0u64, 0u64);
        for u in &list {
            let label = match source {
                LabelSource::Gold => Some(u.label),
                LabelSource::Predicted(p) => u.predicted(p),
            };
            if let Some(l) = label {
                total += 1;
                errors += (!l.is_attributable()) as u64;
            }
        }
        if total == 0 {
            return Err(QuantifyError::NoScoredUnits(system).into());
        }
        out.insert(system, (errors, total));
    }
    Ok(out)
}

/// Error rate per system under `source`, from [`system_error_counts`].
pub fn system_error_rates(corpus: &Corpus, source: LabelSource<'_>, level: Level) -> Result<BTreeMap<String, f64>, RankError> {
    Ok(system_error_counts(corpus, source, level)?
        .into_iter()
        .map(|(s, (k, n))| (s, k as f64 / n as f64))
        .collect())
}

/// One decision per unordered system pair, `system_a < system_b` by name.
pub fn pair_decisions(corpus: &Corpus, source: LabelSource<'_>, opts: &RankOptions) -> Result<Vec<RankDecision>, RankError> {
    let counts = system_error_counts(corpus, source, opts.level)?;
    decisions_from_counts(&counts, opts)
}

pub fn decisions_from_counts(counts: &BTreeMap<String, (u64, u64)>, opts: &RankOptions) -> Result<Vec<RankDecision>, RankError> {
    if counts.len() < 2 {
        return Err(RankError::TooFewSystems(counts.len()));
    }
    let systems: Vec<(&String, &(u64, u64))> = counts.iter().collect();
    let mut out = Vec::new();
    for (i, (a, &(ka, na))) in systems.iter().enumerate() {
        for (b, &(kb, nb)) in &systems[i + 1..] {
            let t = two_prop_ztest_with(ka, na, kb, nb, opts.variance)?;
            let (rate_a, rate_b) = (ka as f64 / na as f64, kb as f64 / nb as f64);
            let direction = if t.p_value >= opts.alpha {
                Direction::Indistinguishable
            } else if rate_a < rate_b {
                Direction::Lower
            } else {
                Direction::Higher
            };
            out.push(RankDecision {
                system_a: (*a).clone(),
                system_b: (*b).clone(),
                rate_a,
                rate_b,
                direction,
                z: t.z,
                p_value: t.p_value,
            });
        }
    }
    Ok(out)
}

/// 3×3 table of (gold direction, predicted direction), rows/columns ordered `<`, `=`, `>`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingConfusion {
    pub cells: [[u64; 3]; 3],
    /// Percentage of pairs whose predicted direction differs from gold.
    pub pct_err: f64,
    /// Percentage of pairs where both are significant but opposite.
    pub pct_major_err: f64,
}

impl RankingConfusion {
    pub fn cell(&self, gold: Direction, predicted: Direction) -> u64 {
        self.cells[gold.index()][predicted.index()]
    }

    pub fn pairs(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }
}

pub fn ranking_confusion(gold: &[RankDecision], predicted: &[RankDecision]) -> Result<RankingConfusion, RankError> {
    if gold.len() != predicted.len() {
        return Err(RankError::PairSetMismatch);
    }
    let pred_by_pair: BTreeMap<(&str, &str), Direction> = predicted
        .iter()
        .map(|d| ((d.system_a.as_str(), d.system_b.as_str()), d.direction))
        .collect();
    let mut cells = [[0u64; 3]; 3];
    let (mut errors, mut major) = (0u64, 0u64);
    for g in gold {
        let p = *pred_by_pair
            .get(&(g.system_a.as_str(), g.system_b.as_str()))
            .ok_or(RankError::PairSetMismatch)?;
        cells[g.direction.index()][p.index()] += 1;
        if p != g.direction {
            errors += 1;
            if p != Direction::Indistinguishable && g.direction != Direction::Indistinguishable {
                major += 1;
            }
        }
    }
    let n = gold.len() as f64;
    let pct = |k: u64| if gold.is_empty() { 0.0 } else { 100.0 * k as f64 / n };
    Ok(RankingConfusion {
        cells,
        pct_err: pct(errors),
        pct_major_err: pct(major),
    })
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), RankError> {
    if x.len() != y.len() {
        return Err(RankError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(RankError::TooShort(x.len()));
    }
    Ok(())
}

fn sign(v: f64) -> i64 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Kendall's tau-a: `(concordant − discordant) / C(n, 2)`; tied pairs count as neither.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64, RankError> {
    check_pair(x, y)?;
    let n = x.len();
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            score += sign(x[i] - x[j]) * sign(y[i] - y[j]);
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}

/// Kendall's tau-b, corrected for ties in either sequence.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, RankError> {
    check_pair(x, y)?;
    let n = x.len();
    let (mut score, mut untied_x, mut untied_y) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let (sx, sy) = (sign(x[i] - x[j]), sign(y[i] - y[j]));
            score += sx * sy;
            untied_x += sx.abs();
            untied_y += sy.abs();
        }
    }
    if untied_x == 0 || untied_y == 0 {
        return Err(RankError::ZeroVariance);
    }
    Ok(score as f64 / ((untied_x as f64) * (untied_y as f64)).sqrt())
}

/// Sample Pearson correlation.
pub fn pearson_rho(x: &[f64], y: &[f64]) -> Result<f64, RankError> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(RankError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::record;

    #[test]
    fn equal_proportions() {
        let t = two_prop_ztest(10, 50, 20, 100).unwrap();
        assert_eq!((t.z, t.p_value), (0.0, 1.0));
    }

    #[test]
    fn thirty_vs_twenty_of_hundred() {
        // Reference values from scipy.stats.norm with the pooled variance.
        let t = two_prop_ztest(30, 100, 20, 100).unwrap();
        assert!((t.z - 1.632_993_161_855_452).abs() < 1e-9);
        assert!((t.p_value - 0.102_470_434_859_749_4).abs() < 1e-9);
        let u = two_prop_ztest_with(30, 100, 20, 100, Variance::Unpooled).unwrap();
        assert!((u.z - 0.1 / 0.0037f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pooled_proportion() {
        assert_eq!(two_prop_ztest(0, 50, 0, 50).unwrap(), ZTest { z: 0.0, p_value: 1.0 });
        assert_eq!(two_prop_ztest(50, 50, 7, 7).unwrap(), ZTest { z: 0.0, p_value: 1.0 });
        let u = two_prop_ztest_with(0, 5, 5, 5, Variance::Unpooled).unwrap();
        assert_eq!(u.p_value, 0.0);
    }

    #[test]
    fn invalid_counts() {
        assert!(two_prop_ztest(1, 0, 0, 1).is_err());
        assert!(two_prop_ztest(3, 2, 0, 1).is_err());
    }

    #[test]
    fn normal_cdf_reference_points() {
        // Values from scipy.stats.norm.cdf.
        for (x, want) in [
            (0.0, 0.5),
            (1.0, 0.841_344_746_068_542_9),
            (-1.959_963_984_540_054, 0.025),
            (3.0, 0.998_650_101_968_369_9),
            (-6.0, 9.865_876_450_376_98e-10),
        ] {
            assert!((normal_cdf(x) - want).abs() < 1e-12, "x={x}");
        }
    }

    fn corpus_with(systems: &[(&str, usize, usize)]) -> Corpus {
        let mut recs = Vec::new();
        for &(s, n, errs) in systems {
            for i in 0..n {
                recs.push(record(&format!("{s}{i:03}"), "D", Some(s), None, (i >= errs) as u8));
            }
        }
        Corpus::new("t", recs).unwrap()
    }

    #[test]
    fn decision_examples() {
        let same = corpus_with(&[("a", 100, 30), ("b", 100, 30)]);
        let d = pair_decisions(&same, LabelSource::Gold, &RankOptions::default()).unwrap();
        assert_eq!(d[0].direction, Direction::Indistinguishable);

        let apart = corpus_with(&[("a", 100, 30), ("b", 100, 5)]);
        let d = pair_decisions(&apart, LabelSource::Gold, &RankOptions::default()).unwrap();
        assert!((d[0].z - 4.652_421_051_992_355).abs() < 1e-9);
        assert!(d[0].p_value < 0.05);
        assert_eq!(d[0].direction, Direction::Higher);

        let three = corpus_with(&[("a", 10, 1), ("b", 10, 2), ("c", 10, 3)]);
        assert_eq!(pair_decisions(&three, LabelSource::Gold, &RankOptions::default()).unwrap().len(), 3);

        let one = corpus_with(&[("a", 10, 1)]);
        assert_eq!(
            pair_decisions(&one, LabelSource::Gold, &RankOptions::default()),
            Err(RankError::TooFewSystems(1))
        );
    }

    fn decision(a: &str, b: &str, direction: Direction) -> RankDecision {
        RankDecision {
            system_a: a.into(),
            system_b: b.into(),
            rate_a: 0.0,
            rate_b: 0.0,
            direction,
            z: 0.0,
            p_value: 1.0,
        }
    }

    fn pairs(n: usize, f: impl Fn(usize) -> Direction) -> Vec<RankDecision> {
        let mut out = Vec::new();
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                out.push(decision(&format!("s{i}"), &format!("s{j}"), f(k)));
                k += 1;
            }
        }
        out
    }

    #[test]
    fn ranking_confusion_examples() {
        use Direction::*;
        let gold = pairs(6, |_| Indistinguishable);
        let rc = ranking_confusion(&gold, &gold).unwrap();
        assert_eq!(rc.pct_err, 0.0);
        assert_eq!(rc.pairs(), 15);

        let pred = pairs(6, |k| if k < 5 { Higher } else { Indistinguishable });
        let rc = ranking_confusion(&gold, &pred).unwrap();
        assert!((rc.pct_err - 33.333_333_333_333_336).abs() < 1e-9);
        assert_eq!(rc.pct_major_err, 0.0);
        assert_eq!(rc.cell(Indistinguishable, Higher), 5);

        let gold5 = pairs(5, |_| Lower);
        let pred5 = pairs(5, |k| if k == 0 { Higher } else { Lower });
        let rc = ranking_confusion(&gold5, &pred5).unwrap();
        assert_eq!(rc.pct_major_err, 10.0);
        assert_eq!(rc.pct_err, 10.0);

        assert_eq!(ranking_confusion(&gold, &gold5), Err(RankError::PairSetMismatch));
        let renamed: Vec<_> = gold.iter().map(|d| decision(&d.system_a, "zz", d.direction)).collect();
        assert_eq!(ranking_confusion(&gold, &renamed), Err(RankError::PairSetMismatch));
    }

    #[test]
    fn kendall_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&x, &x).unwrap(), 1.0);
        let rev = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau(&x, &rev).unwrap(), -1.0);
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [2.0, 1.0, 3.0, 4.0, 5.0, 6.0];
        assert!((kendall_tau(&a, &b).unwrap() - 13.0 / 15.0).abs() < 1e-15);
        assert_eq!(kendall_tau(&a, &b[..3]), Err(RankError::LengthMismatch(6, 3)));
        assert_eq!(kendall_tau(&[1.0], &[1.0]), Err(RankError::TooShort(1)));
    }

    #[test]
    fn tau_b_handles_ties() {
        let x = [1.0, 1.0, 2.0, 3.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        // 5 concordant of 6 pairs; one tie in x.
        assert!((kendall_tau(&x, &y).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!((kendall_tau_b(&x, &y).unwrap() - 5.0 / (5.0f64 * 6.0).sqrt()).abs() < 1e-15);
        assert_eq!(kendall_tau_b(&[1.0, 1.0], &[1.0, 2.0]), Err(RankError::ZeroVariance));
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((pearson_rho(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_rho(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson_rho(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(pearson_rho(&[1.0, 1.0], &[1.0, 2.0]), Err(RankError::ZeroVariance));
    }
}
