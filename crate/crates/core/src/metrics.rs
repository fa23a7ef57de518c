//! Confusion matrices, classification metrics, MCC and the steady-state
//! epoch detector.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `K x K` counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub mcc: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self { k, counts: vec![0; k * k] }
    }

    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self> {
        if k == 0 || counts.len() != k * k {
            return Err(Error::invalid("confusion counts must be K x K"));
        }
        Ok(Self { k, counts })
    }

    /// Tallies predictions against labels.
    pub fn from_predictions(preds: &[usize], labels: &[usize], k: usize) -> Result<Self> {
        if preds.is_empty() {
            return Err(Error::Empty("predictions"));
        }
        if preds.len() != labels.len() {
            return Err(Error::invalid("predictions and labels differ in length"));
        }
        let mut cm = Self::new(k);
        for (&p, &t) in preds.iter().zip(labels) {
            for label in [p, t] {
                if label >= k {
                    return Err(Error::LabelOutOfRange { label, num_classes: k });
                }
            }
            cm.counts[t * k + p] += 1;
        }
        Ok(cm)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Rows as nested vectors (for export).
    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k).map(<[u64]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        (0..self.k).map(|j| self.get(i, j)).sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, j)).sum()
    }

    /// One-vs-rest `(tp, fp, fn, tn)` for class `c`.
    pub fn one_vs_rest(&self, c: usize) -> (u64, u64, u64, u64) {
        let tp = self.get(c, c);
        let fp = self.col_sum(c) - tp;
        let fn_ = self.row_sum(c) - tp;
        (tp, fp, fn_, self.total() - tp - fp - fn_)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total())
    }

    /// Matthews correlation coefficient in covariance form,
    /// `(N tr - sum_k r_k c_k) / sqrt((N^2 - sum c_k^2)(N^2 - sum r_k^2))`,
    /// with 0 when the denominator vanishes.
    pub fn mcc(&self) -> f64 {
        let n = self.total() as f64;
        let mut rc = 0.0;
        let mut cc = 0.0;
        let mut rr = 0.0;
        for k in 0..self.k {
            let (r, c) = (self.row_sum(k) as f64, self.col_sum(k) as f64);
            rc += r * c;
            cc += c * c;
            rr += r * r;
        }
        let num = n * self.trace() as f64 - rc;
        let den = (n * n - cc) * (n * n - rr);
        if den <= 0.0 {
            return 0.0;
        }
        (num / libm::sqrt(den)).clamp(-1.0, 1.0)
    }

    pub fn metrics(&self) -> Metrics {
        let per_class: Vec<ClassMetrics> = (0..self.k)
            .map(|c| {
                let (tp, fp, fn_, _) = self.one_vs_rest(c);
                let precision = ratio(tp, tp + fp);
                let recall = ratio(tp, tp + fn_);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassMetrics { precision, recall, f1 }
            })
            .collect();
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / self.k as f64;
        Metrics {
            accuracy: self.accuracy(),
            macro_precision: mean(|m| m.precision),
            macro_recall: mean(|m| m.recall),
            macro_f1: mean(|m| m.f1),
            mcc: self.mcc(),
            per_class,
        }
    }
}

/// The two-class formula `(tp tn - fp fn) / sqrt((tp+fp)(tp+fn)(tn+fp)(tn+fn))`.
pub fn binary_mcc(tp: u64, tn: u64, fp: u64, fn_: u64) -> f64 {
    let (tp, tn, fp, fn_) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / libm::sqrt(den)
    }
}

/// How the steady-state tolerance is measured against the final value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tolerance {
    /// `|MCC_i - MCC_final| * 100 <= tol` (percentage points).
    #[default]
    Absolute,
    /// `|MCC_i - MCC_final| <= tol / 100 * |MCC_final|`.
    Relative,
}

/// Smallest 1-based epoch `e` such that epochs `e .. e + window` all lie
/// within `tol_pp` of the last value of `series` (MCC fractions in
/// `[-1, 1]`). `None` when no full window qualifies.
pub fn steady_state_epoch(series: &[f64], tol_pp: f64, window: usize, mode: Tolerance) -> Option<usize> {
    let last = *series.last()?;
    let window = window.max(1);
    let close = |v: f64| match mode {
        Tolerance::Absolute => (v - last).abs() * 100.0 <= tol_pp + 1e-9,
        Tolerance::Relative => (v - last).abs() <= tol_pp / 100.0 * last.abs() + 1e-12,
    };
    (0..series.len().checked_sub(window - 1)?)
        .find(|&e| series[e..e + window].iter().all(|&v| close(v)))
        .map(|e| e + 1)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::Empty("fold values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(Aggregate {
        mean,
        std: libm::sqrt(var),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng as _;

    #[test]
    fn perfect_predictions() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let cm = ConfusionMatrix::from_predictions(&labels, &labels, 4).unwrap();
        let m = cm.metrics();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.mcc, 1.0);
        assert!(m.per_class.iter().all(|c| c.precision == 1.0 && c.recall == 1.0));
    }

    #[test]
    fn constant_predictor() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let cm = ConfusionMatrix::from_predictions(&[0; 100], &labels, 4).unwrap();
        let m = cm.metrics();
        assert_eq!(m.accuracy, 0.25);
        assert_eq!(m.mcc, 0.0);
        assert_eq!(m.per_class[0].recall, 1.0);
        assert_eq!(m.per_class[0].precision, 0.25);
    }

    #[test]
    fn binary_matrix_matches_printed_formula() {
        // rows = truth: [[tp, fn], [fp, tn]] with class 0 as positive
        let cm = ConfusionMatrix::from_counts(2, vec![40, 10, 5, 45]).unwrap();
        assert!((cm.mcc() - binary_mcc(40, 45, 5, 10)).abs() < 1e-12);
    }

    #[test]
    fn counting_oracle_on_random_predictions() {
        let mut rng = seeded(7);
        let preds: Vec<usize> = (0..200).map(|_| rng.random_range(0..4)).collect();
        let labels: Vec<usize> = (0..200).map(|_| rng.random_range(0..4)).collect();
        let cm = ConfusionMatrix::from_predictions(&preds, &labels, 4).unwrap();
        let m = cm.metrics();
        for c in 0..4 {
            let pairs = preds.iter().zip(&labels);
            let tp = pairs.clone().filter(|(p, t)| **p == c && **t == c).count() as f64;
            let fp = pairs.clone().filter(|(p, t)| **p == c && **t != c).count() as f64;
            let fn_ = pairs.filter(|(p, t)| **p != c && **t == c).count() as f64;
            assert_eq!(m.per_class[c].precision, tp / (tp + fp));
            assert_eq!(m.per_class[c].recall, tp / (tp + fn_));
        }
        let hits = preds.iter().zip(&labels).filter(|(p, t)| p == t).count();
        assert_eq!(m.accuracy, hits as f64 / 200.0);
    }

    #[test]
    fn bad_input_is_rejected() {
        assert!(ConfusionMatrix::from_predictions(&[], &[], 4).is_err());
        assert!(ConfusionMatrix::from_predictions(&[4], &[0], 4).is_err());
        assert!(ConfusionMatrix::from_predictions(&[0, 1], &[0], 4).is_err());
    }

    #[test]
    fn steady_state_examples() {
        let abs = Tolerance::Absolute;
        assert_eq!(steady_state_epoch(&[0.5; 6], 2.0, 3, abs), Some(1));
        let s = [0.10, 0.50, 0.77, 0.78, 0.79, 0.78, 0.78];
        assert_eq!(steady_state_epoch(&s, 2.0, 3, abs), Some(3));
        let mono = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.61];
        assert_eq!(steady_state_epoch(&mono, 2.0, 3, abs), None);
        assert_eq!(steady_state_epoch(&[], 2.0, 3, abs), None);
        assert_eq!(steady_state_epoch(&[0.5, 0.5], 2.0, 3, abs), None);
    }

    #[test]
    fn relative_tolerance_reading() {
        let s = [0.70, 0.785, 0.80];
        assert_eq!(steady_state_epoch(&s, 2.0, 2, Tolerance::Relative), Some(2));
        assert_eq!(steady_state_epoch(&s, 2.0, 2, Tolerance::Absolute), Some(2));
        let t = [0.70, 0.782, 0.80, 0.80];
        assert_eq!(steady_state_epoch(&t, 2.0, 2, Tolerance::Relative), Some(3));
        assert_eq!(steady_state_epoch(&t, 2.0, 2, Tolerance::Absolute), Some(2));
    }

    #[test]
    fn aggregate_uses_population_std() {
        let a = aggregate(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!((a.mean, a.std), (0.5, 0.0));
        let b = aggregate(&[1.0, 3.0]).unwrap();
        assert_eq!((b.mean, b.std), (2.0, 1.0));
        assert!(aggregate(&[]).is_err());
    }

    proptest! {
        #[test]
        fn mcc_is_bounded_and_one_only_when_diagonal(counts in proptest::collection::vec(0u64..30, 16)) {
            let cm = ConfusionMatrix::from_counts(4, counts.clone()).unwrap();
            let m = cm.mcc();
            prop_assert!((-1.0..=1.0).contains(&m));
            let diagonal = (0..4).all(|i| (0..4).all(|j| i == j || cm.get(i, j) == 0));
            if (m - 1.0).abs() < 1e-12 {
                prop_assert!(diagonal);
            }
            prop_assert_eq!(cm.accuracy(), if cm.total() == 0 { 0.0 } else { cm.trace() as f64 / cm.total() as f64 });
        }

        #[test]
        fn steady_state_monotone_in_tolerance(series in proptest::collection::vec(-1.0f64..1.0, 1..30)) {
            let e2 = steady_state_epoch(&series, 2.0, 3, Tolerance::Absolute);
            let e3 = steady_state_epoch(&series, 3.0, 3, Tolerance::Absolute);
            if let Some(e2) = e2 {
                prop_assert!(e3.is_some_and(|e3| e3 <= e2));
            }
        }
    }
}
