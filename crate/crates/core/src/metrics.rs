//! Evaluation reports: top-1 accuracy, train−eval gap, per-class accuracy
//! statistics and false-positive / false-negative rates, plus run-to-run
//! comparison.
//!
//! Units: `top1`, per-class accuracies and FP/FN rates are fractions in
//! [0, 1]; `delta_gap` and `class_stats` are in percentage points, the way
//! class-wise tables are usually reported.

use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{ensure_same_dim, Error, Result};
use crate::simplex::argmax;
use crate::tensor::{forward, NetworkParams};

/// Predicted class, ties toward the lowest index.
///
/// Softmax is monotone, so the argmax is taken on the logits directly.
pub fn predict(params: &NetworkParams, x: &[f64]) -> Result<usize> {
    let (logits, _) = forward(params, x)?;
    Ok(argmax(&logits))
}

pub fn accuracy(params: &NetworkParams, dataset: &Dataset) -> Result<f64> {
    check_compatible(params, dataset)?;
    let mut correct = 0usize;
    for s in dataset.samples() {
        if predict(params, &s.features)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

fn check_compatible(params: &NetworkParams, dataset: &Dataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    ensure_same_dim(params.input_dim(), dataset.dim())?;
    if dataset.num_classes() > params.num_classes() {
        return Err(Error::DimensionMismatch { expected: params.num_classes(), got: dataset.num_classes() });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// FP / (samples not of this class).
    pub fp_rate: f64,
    /// FN / support.
    pub fn_rate: f64,
}

/// Summary over per-class accuracies, in percentage points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub best: f64,
    pub worst: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_classes: usize,
    pub samples: usize,
    pub top1: f64,
    /// Train minus eval accuracy in percentage points, when a train split was evaluated.
    pub delta_gap: Option<f64>,
    /// Classes with at least one sample.
    pub per_class: Vec<ClassMetrics>,
    pub class_stats: ClassStats,
    pub fp_rate: f64,
    pub fn_rate: f64,
}

pub const CSV_HEADER: &str =
    "num_classes,samples,top1,delta_gap,class_best,class_worst,class_mean,class_std,fp_rate,fn_rate";

impl MetricsReport {
    /// A report carrying only summary statistics (no per-class rows).
    pub fn from_summary(num_classes: usize, top1: f64, class_stats: ClassStats) -> Self {
        Self {
            num_classes,
            samples: 0,
            top1,
            delta_gap: None,
            per_class: Vec::new(),
            class_stats,
            fp_rate: 0.0,
            fn_rate: 0.0,
        }
    }

    /// Build from a confusion matrix indexed `[true][predicted]`.
    pub fn from_confusion(confusion: &[Vec<usize>]) -> Result<Self> {
        let n = confusion.len();
        if n < 2 {
            return Err(Error::InvalidArgument("need at least 2 classes".into()));
        }
        for row in confusion {
            ensure_same_dim(n, row.len())?;
        }
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::Empty("confusion matrix"));
        }
        let mut per_class = Vec::new();
        let mut correct_total = 0;
        for c in 0..n {
            let support: usize = confusion[c].iter().sum();
            let correct = confusion[c][c];
            correct_total += correct;
            if support == 0 {
                continue;
            }
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let false_positives = predicted - correct;
            let false_negatives = support - correct;
            let negatives = total - support;
            per_class.push(ClassMetrics {
                class: c,
                support,
                correct,
                accuracy: correct as f64 / support as f64,
                false_positives,
                false_negatives,
                fp_rate: if negatives == 0 { 0.0 } else { false_positives as f64 / negatives as f64 },
                fn_rate: false_negatives as f64 / support as f64,
            });
        }
        let k = per_class.len() as f64;
        let accs: Vec<f64> = per_class.iter().map(|c| 100.0 * c.accuracy).collect();
        let mean = accs.iter().sum::<f64>() / k;
        let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / k;
        let class_stats = ClassStats {
            best: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            worst: accs.iter().copied().fold(f64::INFINITY, f64::min),
            mean,
            std: var.sqrt(),
        };
        Ok(Self {
            num_classes: n,
            samples: total,
            top1: correct_total as f64 / total as f64,
            delta_gap: None,
            fp_rate: per_class.iter().map(|c| c.fp_rate).sum::<f64>() / k,
            fn_rate: per_class.iter().map(|c| c.fn_rate).sum::<f64>() / k,
            per_class,
            class_stats,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn csv_row(&self) -> String {
        let gap = self.delta_gap.map(|g| g.to_string()).unwrap_or_default();
        let s = &self.class_stats;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.num_classes, self.samples, self.top1, gap, s.best, s.worst, s.mean, s.std, self.fp_rate, self.fn_rate
        )
    }
}

pub fn confusion_matrix(params: &NetworkParams, dataset: &Dataset) -> Result<Vec<Vec<usize>>> {
    check_compatible(params, dataset)?;
    let n = params.num_classes();
    let mut m = vec![vec![0usize; n]; n];
    for s in dataset.samples() {
        m[s.label][predict(params, &s.features)?] += 1;
    }
    Ok(m)
}

pub fn evaluate(params: &NetworkParams, dataset: &Dataset) -> Result<MetricsReport> {
    MetricsReport::from_confusion(&confusion_matrix(params, dataset)?)
}

/// Evaluate on `eval` and fill `delta_gap` from accuracy on `train`.
pub fn evaluate_split(params: &NetworkParams, train: &Dataset, eval: &Dataset) -> Result<MetricsReport> {
    let train_top1 = accuracy(params, train)?;
    let mut report = evaluate(params, eval)?;
    report.delta_gap = Some(100.0 * (train_top1 - report.top1));
    Ok(report)
}

/// Field-wise `b − a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub top1: f64,
    /// Negative values mean the gap shrank.
    pub delta_gap: Option<f64>,
    pub class_best: f64,
    pub class_worst: f64,
    pub class_mean: f64,
    pub class_std: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    /// Per-class accuracy deltas, when both reports carry the same class rows.
    pub per_class: Vec<(usize, f64)>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

pub fn compare(a: &MetricsReport, b: &MetricsReport) -> Result<ComparisonReport> {
    if a.num_classes != b.num_classes {
        return Err(Error::DimensionMismatch { expected: a.num_classes, got: b.num_classes });
    }
    let same_rows =
        a.per_class.len() == b.per_class.len() && a.per_class.iter().zip(&b.per_class).all(|(x, y)| x.class == y.class);
    let per_class = if same_rows {
        a.per_class.iter().zip(&b.per_class).map(|(x, y)| (x.class, y.accuracy - x.accuracy)).collect()
    } else {
        Vec::new()
    };
    Ok(ComparisonReport {
        top1: b.top1 - a.top1,
        delta_gap: a.delta_gap.zip(b.delta_gap).map(|(x, y)| y - x),
        class_best: b.class_stats.best - a.class_stats.best,
        class_worst: b.class_stats.worst - a.class_stats.worst,
        class_mean: b.class_stats.mean - a.class_stats.mean,
        class_std: b.class_stats.std - a.class_stats.std,
        fp_rate: b.fp_rate - a.fp_rate,
        fn_rate: b.fn_rate - a.fn_rate,
        per_class,
    })
}
