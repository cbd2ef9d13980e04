//! Classification metrics, fold aggregation and paired significance tests.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{CognitiveLevel, NUM_LEVELS};
use crate::seed;
use crate::{Error, Result};

/// Gold labels and predictions for one evaluation, aligned by position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRecord {
    golds: Vec<CognitiveLevel>,
    preds: Vec<CognitiveLevel>,
}

impl EvalRecord {
    pub fn new(golds: Vec<CognitiveLevel>, preds: Vec<CognitiveLevel>) -> Result<Self> {
        if golds.is_empty() {
            return Err(Error::Empty("evaluation record".into()));
        }
        if golds.len() != preds.len() {
            return Err(Error::InvalidArgument(format!(
                "{} gold labels but {} predictions",
                golds.len(),
                preds.len()
            )));
        }
        Ok(Self { golds, preds })
    }

    pub fn golds(&self) -> &[CognitiveLevel] {
        &self.golds
    }

    pub fn preds(&self) -> &[CognitiveLevel] {
        &self.preds
    }

    pub fn len(&self) -> usize {
        self.golds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.golds.is_empty()
    }

    /// `matrix[gold][pred]` counts.
    pub fn confusion(&self) -> [[usize; NUM_LEVELS]; NUM_LEVELS] {
        let mut m = [[0; NUM_LEVELS]; NUM_LEVELS];
        for (g, p) in self.golds.iter().zip(&self.preds) {
            m[g.ordinal()][p.ordinal()] += 1;
        }
        m
    }
}

pub fn accuracy(rec: &EvalRecord) -> f64 {
    let hits = rec.golds.iter().zip(&rec.preds).filter(|(g, p)| g == p).count();
    hits as f64 / rec.len() as f64
}

/// Per-class F1; `None` for classes absent from both golds and predictions.
pub fn per_class_f1(rec: &EvalRecord) -> [Option<f64>; NUM_LEVELS] {
    let m = rec.confusion();
    let mut out = [None; NUM_LEVELS];
    for c in 0..NUM_LEVELS {
        let tp = m[c][c] as f64;
        let gold: usize = m[c].iter().sum();
        let pred: usize = (0..NUM_LEVELS).map(|g| m[g][c]).sum();
        if gold == 0 && pred == 0 {
            continue;
        }
        let precision = if pred > 0 { tp / pred as f64 } else { 0.0 };
        let recall = if gold > 0 { tp / gold as f64 } else { 0.0 };
        out[c] = Some(if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        });
    }
    out
}

/// Unweighted mean of per-class F1 over the classes that occur in the
/// golds or the predictions.
pub fn macro_f1(rec: &EvalRecord) -> f64 {
    let scores: Vec<f64> = per_class_f1(rec).into_iter().flatten().collect();
    scores.iter().sum::<f64>() / scores.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Arithmetic mean and sample standard deviation (n - 1 denominator).
pub fn aggregate_folds(values: &[f64]) -> Result<MeanStd> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 values to aggregate, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MeanStd { mean, std: var.sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub n: usize,
    pub mean_difference: f64,
    /// `None` when the differences have zero variance.
    pub t_statistic: Option<f64>,
    /// Two-sided paired t-test p-value; falls back to the permutation
    /// p-value when the t statistic is undefined.
    pub t_p_value: f64,
    /// Two-sided paired permutation p-value: exact for n <= 12, otherwise
    /// estimated from seeded sign-flip samples.
    pub permutation_p_value: f64,
    pub permutation_exact: bool,
}

const EXACT_LIMIT: usize = 12;
const SAMPLED_FLIPS: usize = 20_000;

/// Paired comparison of fold-aligned scores `a` and `b`.
pub fn paired_significance(a: &[f64], b: &[f64]) -> Result<Significance> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired scores differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 paired scores".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let mean = diffs.iter().sum::<f64>() / n as f64;

    if diffs.iter().all(|d| *d == 0.0) {
        return Ok(Significance {
            n,
            mean_difference: 0.0,
            t_statistic: None,
            t_p_value: 1.0,
            permutation_p_value: 1.0,
            permutation_exact: n <= EXACT_LIMIT,
        });
    }

    let (permutation_p_value, permutation_exact) = permutation_p(&diffs);
    let sd = aggregate_folds(&diffs)?.std;
    let (t_statistic, t_p_value) = if sd > 0.0 {
        let t = mean / (sd / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
        (Some(t), (2.0 * dist.cdf(-t.abs())).min(1.0))
    } else {
        (None, permutation_p_value)
    };
    Ok(Significance {
        n,
        mean_difference: mean,
        t_statistic,
        t_p_value,
        permutation_p_value,
        permutation_exact,
    })
}

fn permutation_p(diffs: &[f64]) -> (f64, bool) {
    let n = diffs.len();
    let observed = diffs.iter().sum::<f64>().abs();
    let tol = 1e-12 * observed.max(1.0);
    let flipped_sum = |signs: &dyn Fn(usize) -> bool| -> f64 {
        diffs
            .iter()
            .enumerate()
            .map(|(i, d)| if signs(i) { -d } else { *d })
            .sum::<f64>()
            .abs()
    };
    if n <= EXACT_LIMIT {
        let total = 1usize << n;
        let extreme = (0..total)
            .filter(|mask| flipped_sum(&|i| mask & (1 << i) != 0) >= observed - tol)
            .count();
        (extreme as f64 / total as f64, true)
    } else {
        let mut rng = seed::rng(0, "permutation");
        let mut extreme = 0usize;
        for _ in 0..SAMPLED_FLIPS {
            let signs: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            if flipped_sum(&|i| signs[i]) >= observed - tol {
                extreme += 1;
            }
        }
        ((extreme + 1) as f64 / (SAMPLED_FLIPS + 1) as f64, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use CognitiveLevel::*;

    fn levels(xs: &[usize]) -> Vec<CognitiveLevel> {
        xs.iter().map(|&i| CognitiveLevel::from_ordinal(i).unwrap()).collect()
    }

    #[test]
    fn hand_case() {
        let rec = EvalRecord::new(levels(&[0, 0, 1, 2]), levels(&[0, 1, 1, 2])).unwrap();
        assert_eq!(accuracy(&rec), 0.75);
        assert!((macro_f1(&rec) - 7.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_all_wrong() {
        let golds = CognitiveLevel::ALL.to_vec();
        let rec = EvalRecord::new(golds.clone(), golds.clone()).unwrap();
        assert_eq!(accuracy(&rec), 1.0);
        assert_eq!(macro_f1(&rec), 1.0);
        let wrong = EvalRecord::new(vec![Knowledge, Analysis], vec![Evaluation, Synthesis]).unwrap();
        assert_eq!(accuracy(&wrong), 0.0);
        assert_eq!(macro_f1(&wrong), 0.0);
    }

    #[test]
    fn absent_class_rules() {
        // Evaluation never appears: excluded. Synthesis only predicted: F1 0.
        let rec = EvalRecord::new(vec![Knowledge, Knowledge], vec![Knowledge, Synthesis]).unwrap();
        let f1 = per_class_f1(&rec);
        assert_eq!(f1[Evaluation.ordinal()], None);
        assert_eq!(f1[Synthesis.ordinal()], Some(0.0));
        assert!((macro_f1(&rec) - (2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn record_validation() {
        assert!(EvalRecord::new(vec![], vec![]).is_err());
        assert!(EvalRecord::new(vec![Knowledge], vec![]).is_err());
    }

    #[test]
    fn aggregation() {
        let a = aggregate_folds(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(a.mean, 3.0);
        assert!((a.std - (10.0f64 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(aggregate_folds(&[0.4; 5]).unwrap().std, 0.0);
        assert!(aggregate_folds(&[1.0]).is_err());
        let b = aggregate_folds(&[5.0, 3.0, 1.0, 4.0, 2.0]).unwrap();
        assert_eq!(a.mean, b.mean);
    }

    #[test]
    fn permutation_values() {
        let b = [0.61, 0.70, 0.55, 0.66, 0.58];
        let a: Vec<f64> = b.iter().map(|x| x + 0.05).collect();
        let s = paired_significance(&a, &b).unwrap();
        assert!((s.permutation_p_value - 0.0625).abs() < 1e-12);
        assert!(s.permutation_exact);
        let same = paired_significance(&b, &b).unwrap();
        assert_eq!(same.permutation_p_value, 1.0);
        assert_eq!(same.t_p_value, 1.0);
        assert!(paired_significance(&b, &b[..4]).is_err());
    }

    /// Two-sided p-value from the t density by composite Simpson quadrature.
    fn t_p_by_quadrature(t: f64, df: f64) -> f64 {
        let ln_gamma = |x: f64| statrs::function::gamma::ln_gamma(x);
        let norm = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
        let pdf = |x: f64| norm * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
        let steps = 200_000;
        let h = t.abs() / steps as f64;
        let mut s = pdf(0.0) + pdf(t.abs());
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(i as f64 * h);
        }
        let central = s * h / 3.0;
        1.0 - 2.0 * central
    }

    #[test]
    fn t_test_matches_quadrature() {
        let a = [0.88, 0.85, 0.90, 0.86, 0.89];
        let b = [0.82, 0.84, 0.80, 0.83, 0.81];
        let s = paired_significance(&a, &b).unwrap();
        let t = s.t_statistic.unwrap();
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let m = diffs.iter().sum::<f64>() / 5.0;
        let sd = (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((t - m / (sd / 5f64.sqrt())).abs() < 1e-12);
        assert!((s.t_p_value - t_p_by_quadrature(t, 4.0)).abs() < 1e-8);
    }

    #[test]
    fn constant_nonzero_difference_uses_permutation() {
        let s = paired_significance(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(s.t_statistic.is_none());
        assert_eq!(s.t_p_value, s.permutation_p_value);
        assert!((s.permutation_p_value - 0.25).abs() < 1e-12);
    }

    fn brute(golds: &[usize], preds: &[usize]) -> (f64, f64) {
        let n = golds.len();
        let acc = (0..n).filter(|&i| golds[i] == preds[i]).count() as f64 / n as f64;
        let mut f1s = Vec::new();
        for c in 0..6 {
            let tp = (0..n).filter(|&i| golds[i] == c && preds[i] == c).count() as f64;
            let fp = (0..n).filter(|&i| golds[i] != c && preds[i] == c).count() as f64;
            let fn_ = (0..n).filter(|&i| golds[i] == c && preds[i] != c).count() as f64;
            if tp + fp + fn_ == 0.0 {
                continue;
            }
            f1s.push(if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) });
        }
        (acc, f1s.iter().sum::<f64>() / f1s.len() as f64)
    }

    proptest! {
        #[test]
        fn matches_brute_force(pairs in proptest::collection::vec((0usize..6, 0usize..6), 1..40)) {
            let golds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let preds: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let rec = EvalRecord::new(levels(&golds), levels(&preds)).unwrap();
            let (acc, f1) = brute(&golds, &preds);
            prop_assert!((accuracy(&rec) - acc).abs() < 1e-12);
            prop_assert!((macro_f1(&rec) - f1).abs() < 1e-12);
            prop_assert!(macro_f1(&rec) <= 1.0);
            // permutation invariance
            let mut rev = pairs.clone();
            rev.reverse();
            let rec2 = EvalRecord::new(
                levels(&rev.iter().map(|p| p.0).collect::<Vec<_>>()),
                levels(&rev.iter().map(|p| p.1).collect::<Vec<_>>()),
            ).unwrap();
            prop_assert!((macro_f1(&rec2) - macro_f1(&rec)).abs() < 1e-12);
            prop_assert!((accuracy(&rec2) - accuracy(&rec)).abs() < 1e-12);
        }
    }
}
