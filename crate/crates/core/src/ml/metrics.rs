//! Confusion matrix and the derived precision/recall/F1 report.
//!
//! All metric arithmetic happens in f64 regardless of the model's scalar
//! type; a 0/0 ratio is defined as 0 throughout.

use std::fmt::Write as _;

use super::MlError;

/// Rows are actual classes, columns are predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_pairs(
        actual: &[usize],
        predicted: &[usize],
        n_classes: usize,
    ) -> Result<Self, MlError> {
        if actual.len() != predicted.len() {
            return Err(MlError::LengthMismatch {
                predictions: predicted.len(),
                actuals: actual.len(),
            });
        }
        let mut counts = vec![vec![0usize; n_classes]; n_classes];
        for (&a, &p) in actual.iter().zip(predicted) {
            counts[a][p] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|row| row.iter().sum::<usize>()).sum()
    }

    /// Packets of class c: the row sum.
    pub fn support(&self, c: usize) -> usize {
        self.counts[c].iter().sum()
    }

    /// Packets predicted as class c: the column sum.
    pub fn predicted(&self, c: usize) -> usize {
        self.counts.iter().map(|row| row[c]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn evaluate(
    actual: &[usize],
    predicted: &[usize],
    n_classes: usize,
) -> Result<MetricsReport, MlError> {
    let confusion = ConfusionMatrix::from_pairs(actual, predicted, n_classes)?;
    let per_class: Vec<ClassMetrics> = (0..n_classes)
        .map(|c| {
            let tp = confusion.counts[c][c] as f64;
            let precision = ratio(tp, confusion.predicted(c) as f64);
            let recall = ratio(tp, confusion.support(c) as f64);
            let f1 = ratio(2.0 * precision * recall, precision + recall);
            ClassMetrics {
                precision,
                recall,
                f1,
                support: confusion.support(c),
            }
        })
        .collect();
    let k = n_classes as f64;
    let correct: usize = (0..n_classes).map(|c| confusion.counts[c][c]).sum();
    Ok(MetricsReport {
        accuracy: ratio(correct as f64, confusion.total() as f64),
        macro_precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        macro_recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        macro_f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
        confusion,
        per_class,
    })
}

impl MetricsReport {
    /// Human-readable table for CLI output.
    pub fn render(&self, class_names: &[&str]) -> String {
        assert_eq!(class_names.len(), self.confusion.n_classes());
        let width = class_names.iter().map(|n| n.len()).max().unwrap_or(5).max(9);
        let mut out = String::new();
        let _ = writeln!(out, "confusion matrix (rows actual, columns predicted):");
        let _ = write!(out, "{:>width$}", "");
        for name in class_names {
            let _ = write!(out, " {name:>width$}");
        }
        out.push('\n');
        for (c, row) in self.confusion.counts.iter().enumerate() {
            let _ = write!(out, "{:>width$}", class_names[c]);
            for &v in row {
                let _ = write!(out, " {v:>width$}");
            }
            out.push('\n');
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:>width$} {:>9} {:>9} {:>9} {:>9}",
            "", "precision", "recall", "f1", "support"
        );
        for (c, m) in self.per_class.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:>width$} {:>9.4} {:>9.4} {:>9.4} {:>9}",
                class_names[c], m.precision, m.recall, m.f1, m.support
            );
        }
        out.push('\n');
        let _ = writeln!(out, "accuracy        {:.4}", self.accuracy);
        let _ = writeln!(out, "macro precision {:.4}", self.macro_precision);
        let _ = writeln!(out, "macro recall    {:.4}", self.macro_recall);
        let _ = writeln!(out, "macro f1        {:.4}", self.macro_f1);
        out
    }
}
