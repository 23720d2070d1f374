//! Confusion counts, classification report and ROC analysis (class 1 positive).

use std::fmt;

use crate::error::{check_len, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub const CSV_HEADER: &'static str = "actual,predicted_0,predicted_1";

    /// 2×2 layout with actual classes as rows.
    pub fn to_csv(&self) -> String {
        format!(
            "{}\n0,{},{}\n1,{},{}\n",
            Self::CSV_HEADER,
            self.tn,
            self.fp,
            self.fn_,
            self.tp
        )
    }
}

fn check_binary(what: &str, v: &[u8]) -> Result<()> {
    if let Some(i) = v.iter().position(|&y| y > 1) {
        return Err(Error::Validation(format!("{what}[{i}] = {} is not 0 or 1", v[i])));
    }
    Ok(())
}

pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<ConfusionMatrix> {
    check_len("predictions", predictions.len(), labels.len())?;
    if labels.is_empty() {
        return Err(Error::Validation("no samples to score".into()));
    }
    check_binary("predictions", predictions)?;
    check_binary("labels", labels)?;
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (1, 1) => cm.tp += 1,
            (1, _) => cm.fp += 1,
            (_, 0) => cm.tn += 1,
            _ => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// Support-weighted mean of the per-class F1 scores.
    pub f1: f64,
    pub precision_class1: f64,
    pub precision_class0: f64,
    pub recall_class1: f64,
    pub recall_class0: f64,
    pub auc: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str =
        "accuracy,f1,precision_class1,precision_class0,recall_class1,recall_class0,auc";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.accuracy,
            self.f1,
            self.precision_class1,
            self.precision_class0,
            self.recall_class1,
            self.recall_class0,
            self.auc
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }
}

impl fmt::Display for MetricsReport {
    /// Percentages, two decimals.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("Accuracy (%)", self.accuracy),
            ("F1 Score", self.f1),
            ("Precision Class 1", self.precision_class1),
            ("Precision Class 0", self.precision_class0),
            ("Recall Class 1", self.recall_class1),
            ("Recall Class 0", self.recall_class0),
            ("AUC", self.auc),
        ];
        for (name, v) in rows {
            writeln!(f, "{name:<18} {:>7.2}", 100.0 * v)?;
        }
        Ok(())
    }
}

/// Report from confusion counts plus the scores needed for the AUC.
pub fn report(cm: &ConfusionMatrix, scores: &[f64], labels: &[u8]) -> Result<MetricsReport> {
    if cm.total() == 0 || labels.is_empty() {
        return Err(Error::Validation("cannot report on an empty evaluation".into()));
    }
    check_len("scores", scores.len(), labels.len())?;
    check_len("confusion total", cm.total(), labels.len())?;
    let precision_class1 = ratio(cm.tp, cm.tp + cm.fp);
    let precision_class0 = ratio(cm.tn, cm.tn + cm.fn_);
    let recall_class1 = ratio(cm.tp, cm.tp + cm.fn_);
    let recall_class0 = ratio(cm.tn, cm.tn + cm.fp);
    let support1 = (cm.tp + cm.fn_) as f64;
    let support0 = (cm.tn + cm.fp) as f64;
    let total = cm.total() as f64;
    let f1 = (support1 * f1(precision_class1, recall_class1) + support0 * f1(precision_class0, recall_class0)) / total;
    let (_, auc) = roc_curve(scores, labels)?;
    Ok(MetricsReport {
        accuracy: (cm.tp + cm.tn) as f64 / total,
        f1,
        precision_class1,
        precision_class0,
        recall_class1,
        recall_class0,
        auc,
    })
}

/// Confusion at threshold 0.5 and the full report.
pub fn evaluate_scores(scores: &[f64], labels: &[u8]) -> Result<(ConfusionMatrix, MetricsReport)> {
    let preds: Vec<u8> = scores.iter().map(|&s| u8::from(s >= 0.5)).collect();
    let cm = confusion(&preds, labels)?;
    let r = report(&cm, scores, labels)?;
    Ok((cm, r))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// `(false-positive rate, true-positive rate)`, from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
}

impl RocCurve {
    pub const CSV_HEADER: &'static str = "fpr,tpr";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (x, y) in &self.points {
            out.push_str(&format!("{x},{y}\n"));
        }
        out
    }
}

/// Sweeps every distinct score as a threshold, highest first; tied scores move
/// together. The AUC is the trapezoidal area under the resulting points.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<(RocCurve, f64)> {
    check_len("scores", scores.len(), labels.len())?;
    check_binary("labels", labels)?;
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Validation(format!("score {i} is NaN")));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Validation(format!(
            "ROC needs both classes; got {pos} positive and {neg} negative samples"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum::<f64>()
        .clamp(0.0, 1.0);
    Ok((RocCurve { points }, auc))
}
