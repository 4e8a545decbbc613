//! Multi-label confusion counts and precision / recall / F1 with micro,
//! macro, weighted and per-sample averaging.
//!
//! Any ratio whose denominator is zero is reported as 0. A sample with no
//! actual and no predicted labels scores 1 on all three per-sample metrics.

use serde::{Deserialize, Serialize};

use crate::data::LabelTaxonomy;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Confusion counts for one class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ClassCounts {
    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_score(self.precision(), self.recall())
    }
}

impl std::ops::Add for ClassCounts {
    type Output = ClassCounts;

    fn add(self, o: ClassCounts) -> ClassCounts {
        ClassCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn precision(c: &ClassCounts) -> f64 {
    c.precision()
}

pub fn recall(c: &ClassCounts) -> f64 {
    c.recall()
}

pub fn f1(c: &ClassCounts) -> f64 {
    c.f1()
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn check_binary(m: &Matrix, name: &str) -> Result<()> {
    match m.as_slice().iter().position(|&v| v != 0.0 && v != 1.0) {
        Some(i) => Err(Error::Validation(format!(
            "{name}[{}][{}] = {} is not binary",
            i / m.cols().max(1),
            i % m.cols().max(1),
            m.as_slice()[i]
        ))),
        None => Ok(()),
    }
}

/// Per-class TP/FP/FN/TN from `N x L` binary matrices.
pub fn count_confusions(pred: &Matrix, actual: &Matrix) -> Result<Vec<ClassCounts>> {
    if pred.shape() != actual.shape() {
        return Err(Error::Shape(format!(
            "predictions {:?} vs actual {:?}",
            pred.shape(),
            actual.shape()
        )));
    }
    check_binary(pred, "pred")?;
    check_binary(actual, "actual")?;
    let mut counts = vec![ClassCounts::default(); pred.cols()];
    for (pr, ar) in pred.row_iter().zip(actual.row_iter()) {
        for ((c, &p), &a) in counts.iter_mut().zip(pr).zip(ar) {
            match (p == 1.0, a == 1.0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub micro: Averages,
    #[serde(rename = "macro")]
    pub macro_: Averages,
    pub weighted: Averages,
    pub samples: Averages,
}

impl MetricsReport {
    /// JSON with every real rounded to 4 decimals.
    pub fn to_json(&self) -> serde_json::Value {
        let r4 = |x: f64| (x * 1e4).round() / 1e4;
        let avg = |a: &Averages| {
            serde_json::json!({"precision": r4(a.precision), "recall": r4(a.recall), "f1": r4(a.f1)})
        };
        serde_json::json!({
            "per_class": self.per_class.iter().map(|c| serde_json::json!({
                "label": c.label,
                "precision": r4(c.precision),
                "recall": r4(c.recall),
                "f1": r4(c.f1),
                "support": c.support,
            })).collect::<Vec<_>>(),
            "micro": avg(&self.micro),
            "macro": avg(&self.macro_),
            "weighted": avg(&self.weighted),
            "samples": avg(&self.samples),
        })
    }

    /// Plain-text table in the usual classification-report layout.
    pub fn to_text(&self) -> String {
        let width = self
            .per_class
            .iter()
            .map(|c| c.label.len())
            .max()
            .unwrap_or(0)
            .max(12);
        let mut s = format!(
            "{:>width$}  precision  recall  f1-score  support\n",
            ""
        );
        for c in &self.per_class {
            s.push_str(&format!(
                "{:>width$}  {:>9.4}  {:>6.4}  {:>8.4}  {:>7}\n",
                c.label, c.precision, c.recall, c.f1, c.support
            ));
        }
        s.push('\n');
        for (name, a) in [
            ("micro avg", &self.micro),
            ("macro avg", &self.macro_),
            ("weighted avg", &self.weighted),
            ("samples avg", &self.samples),
        ] {
            s.push_str(&format!(
                "{:>width$}  {:>9.4}  {:>6.4}  {:>8.4}\n",
                name, a.precision, a.recall, a.f1
            ));
        }
        s
    }
}

/// Per-class metrics plus the four averages for `N x L` binary matrices.
/// `labels` names the columns.
pub fn classification_report_with_labels(
    pred: &Matrix,
    actual: &Matrix,
    labels: &[String],
) -> Result<MetricsReport> {
    if pred.rows() == 0 {
        return Err(Error::Validation("classification report over zero samples".into()));
    }
    if labels.len() != pred.cols() {
        return Err(Error::Shape(format!(
            "{} label names for {} columns",
            labels.len(),
            pred.cols()
        )));
    }
    let counts = count_confusions(pred, actual)?;

    let per_class: Vec<ClassMetrics> = counts
        .iter()
        .zip(labels)
        .map(|(c, label)| ClassMetrics {
            label: label.clone(),
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            support: c.support(),
        })
        .collect();

    let total = counts
        .iter()
        .copied()
        .fold(ClassCounts::default(), |a, b| a + b);
    let micro = Averages {
        precision: total.precision(),
        recall: total.recall(),
        f1: total.f1(),
    };

    let n_classes = per_class.len() as f64;
    let macro_ = Averages {
        precision: per_class.iter().map(|c| c.precision).sum::<f64>() / n_classes,
        recall: per_class.iter().map(|c| c.recall).sum::<f64>() / n_classes,
        f1: per_class.iter().map(|c| c.f1).sum::<f64>() / n_classes,
    };

    let support: u64 = per_class.iter().map(|c| c.support).sum();
    let weighted_mean = |f: fn(&ClassMetrics) -> f64| {
        if support == 0 {
            0.0
        } else {
            per_class.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / support as f64
        }
    };
    let weighted = Averages {
        precision: weighted_mean(|c| c.precision),
        recall: weighted_mean(|c| c.recall),
        f1: weighted_mean(|c| c.f1),
    };

    let mut sp = 0.0;
    let mut sr = 0.0;
    let mut sf = 0.0;
    for (pr, ar) in pred.row_iter().zip(actual.row_iter()) {
        let n_pred = pr.iter().filter(|&&v| v == 1.0).count() as u64;
        let n_true = ar.iter().filter(|&&v| v == 1.0).count() as u64;
        let hit = pr
            .iter()
            .zip(ar)
            .filter(|&(&p, &a)| p == 1.0 && a == 1.0)
            .count() as u64;
        if n_pred == 0 && n_true == 0 {
            sp += 1.0;
            sr += 1.0;
            sf += 1.0;
        } else {
            let p = ratio(hit, n_pred);
            let r = ratio(hit, n_true);
            sp += p;
            sr += r;
            sf += f1_score(p, r);
        }
    }
    let n = pred.rows() as f64;
    let samples = Averages {
        precision: sp / n,
        recall: sr / n,
        f1: sf / n,
    };

    Ok(MetricsReport {
        per_class,
        micro,
        macro_,
        weighted,
        samples,
    })
}

pub fn classification_report(
    pred: &Matrix,
    actual: &Matrix,
    taxonomy: &LabelTaxonomy,
) -> Result<MetricsReport> {
    classification_report_with_labels(pred, actual, taxonomy.labels())
}

/// Support-weighted F1, the model-selection score.
pub fn weighted_f1(pred: &Matrix, actual: &Matrix) -> Result<f64> {
    let labels: Vec<String> = (0..pred.cols()).map(|i| i.to_string()).collect();
    Ok(classification_report_with_labels(pred, actual, &labels)?.weighted.f1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[u8]]) -> Matrix {
        let rows: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect();
        Matrix::from_rows(&rows).unwrap()
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn identical_matrices_have_no_errors() {
        let a = m(&[&[1, 0, 1], &[0, 1, 1]]);
        for c in count_confusions(&a, &a).unwrap() {
            assert_eq!((c.fp, c.fn_), (0, 0));
        }
        let inv = a.map(|v| 1.0 - v);
        for c in count_confusions(&inv, &a).unwrap() {
            assert_eq!((c.tp, c.tn), (0, 0));
        }
    }

    #[test]
    fn per_class_formulas() {
        let c = ClassCounts { tp: 1, fp: 1, fn_: 0, tn: 3 };
        assert_eq!(c.precision(), 0.5);
        assert_eq!(f1_score(0.37, 0.37), 0.37);
        // Plants & Trees row: precision 0.96, recall 0.94 -> 0.9499 -> 0.95.
        let f = f1_score(0.96, 0.94);
        assert!((f - 0.949_894_736_842_105_3).abs() < 1e-15);
        assert_eq!((f * 100.0).round() / 100.0, 0.95);
    }

    #[test]
    fn zero_denominators_are_zero() {
        let none = ClassCounts { tp: 0, fp: 0, fn_: 0, tn: 5 };
        assert_eq!((none.precision(), none.recall(), none.f1()), (0.0, 0.0, 0.0));
        let no_pred = ClassCounts { tp: 0, fp: 0, fn_: 2, tn: 5 };
        assert_eq!(no_pred.precision(), 0.0);
        assert_eq!(no_pred.recall(), 0.0);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let a = m(&[&[1, 0, 1], &[0, 1, 1], &[0, 0, 0]]);
        let r = classification_report_with_labels(&a, &a, &names(3)).unwrap();
        for avg in [r.micro, r.macro_, r.weighted, r.samples] {
            assert_eq!(avg, Averages { precision: 1.0, recall: 1.0, f1: 1.0 });
        }
    }

    #[test]
    fn single_class_aggregates_coincide() {
        let p = m(&[&[1], &[1], &[0], &[0]]);
        let a = m(&[&[1], &[0], &[1], &[0]]);
        let r = classification_report_with_labels(&p, &a, &names(1)).unwrap();
        let c = &r.per_class[0];
        for avg in [r.micro, r.macro_, r.weighted] {
            assert_eq!((avg.precision, avg.recall, avg.f1), (c.precision, c.recall, c.f1));
        }
    }

    #[test]
    fn samples_average_rules() {
        // Row 0: empty vs empty -> 1. Row 1: predicted nothing, one actual -> 0.
        // Row 2: {0,1} vs {1} -> P 0.5, R 1, F1 2/3.
        let p = m(&[&[0, 0], &[0, 0], &[1, 1]]);
        let a = m(&[&[0, 0], &[1, 0], &[0, 1]]);
        let r = classification_report_with_labels(&p, &a, &names(2)).unwrap();
        assert!((r.samples.precision - 1.5 / 3.0).abs() < 1e-15);
        assert!((r.samples.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.samples.f1 - (1.0 + 2.0 / 3.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let a = m(&[&[1, 0]]);
        assert!(matches!(count_confusions(&a, &m(&[&[1]])), Err(Error::Shape(_))));
        let bad = Matrix::from_rows(&[[0.5, 0.0]]).unwrap();
        assert!(matches!(count_confusions(&bad, &a), Err(Error::Validation(_))));
        let empty = Matrix::zeros(0, 2);
        assert!(matches!(
            classification_report_with_labels(&empty, &empty, &names(2)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn json_rounds_to_four_decimals() {
        let p = m(&[&[1, 1, 0], &[1, 0, 0], &[0, 1, 1]]);
        let a = m(&[&[1, 0, 0], &[1, 1, 0], &[0, 1, 0]]);
        let r = classification_report_with_labels(&p, &a, &names(3)).unwrap();
        let j = r.to_json();
        // TP 3, predicted 5, actual 4: P 0.6, R 0.75, F1 2/3.
        assert_eq!(j["micro"]["precision"].as_f64().unwrap(), 0.6);
        assert_eq!(j["micro"]["f1"].as_f64().unwrap(), 0.6667);
        assert_eq!(j["per_class"][0]["support"], 2);
        assert!(j.get("macro").is_some() && j.get("samples").is_some());
        assert!(r.to_text().contains("weighted avg"));
    }

    fn binary_pair() -> impl Strategy<Value = (Matrix, Matrix)> {
        (1usize..30, 1usize..7).prop_flat_map(|(n, l)| {
            (
                prop::collection::vec(prop::bool::ANY, n * l),
                prop::collection::vec(prop::bool::ANY, n * l),
            )
                .prop_map(move |(p, a)| {
                    let f = |v: Vec<bool>| {
                        Matrix::from_vec(n, l, v.into_iter().map(|b| b as u8 as f64).collect())
                            .unwrap()
                    };
                    (f(p), f(a))
                })
        })
    }

    proptest! {
        #[test]
        fn report_invariants((p, a) in binary_pair()) {
            let r = classification_report_with_labels(&p, &a, &names(p.cols())).unwrap();
            prop_assert!((r.micro.f1 - f1_score(r.micro.precision, r.micro.recall)).abs() < 1e-15);
            let f1s: Vec<f64> = r.per_class.iter().map(|c| c.f1).collect();
            let (lo, hi) = f1s.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &f| (lo.min(f), hi.max(f)));
            if r.per_class.iter().any(|c| c.support > 0) {
                prop_assert!(r.weighted.f1 >= lo - 1e-12 && r.weighted.f1 <= hi + 1e-12);
            }
            for v in [r.micro, r.macro_, r.weighted, r.samples] {
                for x in [v.precision, v.recall, v.f1] {
                    prop_assert!((0.0..=1.0).contains(&x));
                }
            }
            for (c, cc) in count_confusions(&p, &a).unwrap().iter().zip(&r.per_class) {
                prop_assert_eq!(c.support(), cc.support);
                prop_assert_eq!(c.total(), p.rows() as u64);
            }
        }

        #[test]
        fn samples_invariant_under_row_permutation((p, a) in binary_pair(), seed in any::<u64>()) {
            let perm = crate::numerics::RngStream::new(seed).permutation(p.rows());
            let r1 = classification_report_with_labels(&p, &a, &names(p.cols())).unwrap();
            let r2 = classification_report_with_labels(
                &p.select_rows(&perm), &a.select_rows(&perm), &names(p.cols())).unwrap();
            prop_assert!((r1.samples.f1 - r2.samples.f1).abs() < 1e-12);
            prop_assert!((r1.samples.precision - r2.samples.precision).abs() < 1e-12);
        }

        #[test]
        fn class_metrics_follow_column_permutation((p, a) in binary_pair(), seed in any::<u64>()) {
            let l = p.cols();
            let perm = crate::numerics::RngStream::new(seed).permutation(l);
            let permute = |m: &Matrix| Matrix::from_fn(m.rows(), l, |i, j| m.get(i, perm[j]));
            let labels = names(l);
            let relabeled: Vec<String> = perm.iter().map(|&j| labels[j].clone()).collect();
            let r1 = classification_report_with_labels(&p, &a, &labels).unwrap();
            let r2 = classification_report_with_labels(&permute(&p), &permute(&a), &relabeled).unwrap();
            for c in &r2.per_class {
                let orig = r1.per_class.iter().find(|o| o.label == c.label).unwrap();
                prop_assert_eq!(orig, c);
            }
            prop_assert!((r1.weighted.f1 - r2.weighted.f1).abs() < 1e-12);
        }
    }
}
