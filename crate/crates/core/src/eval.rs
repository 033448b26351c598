//! Confusion counts, precision / recall / F-measure / accuracy, and the
//! per-model report table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Polarity;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("{predictions} predictions for {golds} gold labels")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(rename = "tp")]
    pub true_pos: u64,
    #[serde(rename = "fp")]
    pub false_pos: u64,
    #[serde(rename = "fn")]
    pub false_neg: u64,
    #[serde(rename = "tn")]
    pub true_neg: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub accuracy: f64,
}

/// Counts with `positive` as the positive class.
pub fn confusion<L: PartialEq>(predictions: &[L], golds: &[L], positive: &L) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    if golds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (p, g) in predictions.iter().zip(golds) {
        match (p == positive, g == positive) {
            (true, true) => cm.true_pos += 1,
            (true, false) => cm.false_pos += 1,
            (false, true) => cm.false_neg += 1,
            (false, false) => cm.true_neg += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * (precision * recall) / (precision + recall)
    }
}

/// Undefined ratios (zero denominators) are reported as 0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let precision = ratio(cm.true_pos, cm.true_pos + cm.false_pos);
    let recall = ratio(cm.true_pos, cm.true_pos + cm.false_neg);
    Ok(Metrics {
        precision,
        recall,
        f_measure: f_measure(precision, recall),
        accuracy: ratio(cm.true_pos + cm.true_neg, cm.total()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: Polarity,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Negative first, then Positive.
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean of the per-class rows.
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
    pub accuracy: f64,
    pub examples: u64,
}

impl MetricsReport {
    pub fn class(&self, class: Polarity) -> &ClassMetrics {
        &self.per_class[class.index()]
    }
}

pub fn evaluate_per_class(predictions: &[Polarity], golds: &[Polarity]) -> Result<MetricsReport, EvalError> {
    let index = |v: &[Polarity]| v.iter().map(|p| p.index()).collect::<Vec<_>>();
    evaluate_indices(&index(predictions), &index(golds))
}

/// Like [`evaluate_per_class`] on class indices. A prediction outside the
/// two polarity classes (from a wider output layer) counts as a miss for
/// every class.
pub fn evaluate_indices(predictions: &[usize], golds: &[usize]) -> Result<MetricsReport, EvalError> {
    let mut per_class = Vec::with_capacity(Polarity::ALL.len());
    for class in Polarity::ALL {
        let cm = confusion(predictions, golds, &class.index())?;
        let m = metrics(&cm)?;
        per_class.push(ClassMetrics {
            class,
            precision: m.precision,
            recall: m.recall,
            f_measure: m.f_measure,
            confusion: cm,
        });
    }
    let k = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k;
    let macro_avg = MacroMetrics {
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        f_measure: mean(|c| c.f_measure),
    };
    let correct = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(MetricsReport {
        per_class,
        macro_avg,
        accuracy: ratio(correct as u64, golds.len() as u64),
        examples: golds.len() as u64,
    })
}

fn capitalized(class: Polarity) -> &'static str {
    match class {
        Polarity::Negative => "Negative",
        Polarity::Positive => "Positive",
    }
}

/// Two-decimal display. Halfway cases round to even on the exact binary
/// value, matching `format!`.
pub fn display2(value: f64) -> String {
    format!("{value:.2}")
}

/// One block per model, in input order, with Negative / Positive / AVG rows.
pub fn render_report(reports: &[(String, MetricsReport)]) -> String {
    let mut out = String::new();
    for (i, (name, report)) in reports.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "{name}");
        let _ = writeln!(
            out,
            "{:<10}{:>11}{:>9}{:>12}{:>11}",
            "", "Precision", "Recall", "F-measure", "Accuracy"
        );
        for c in &report.per_class {
            let _ = writeln!(
                out,
                "{:<10}{:>11}{:>9}{:>12}",
                capitalized(c.class),
                display2(c.precision),
                display2(c.recall),
                display2(c.f_measure)
            );
        }
        let m = &report.macro_avg;
        let _ = writeln!(
            out,
            "{:<10}{:>11}{:>9}{:>12}{:>11}",
            "AVG",
            display2(m.precision),
            display2(m.recall),
            display2(m.f_measure),
            display2(report.accuracy * 100.0)
        );
    }
    out
}

pub const REPORT_SCHEMA: &str = "report/1";

#[derive(Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: String,
    pub models: Vec<NamedReport>,
}

#[derive(Serialize, Deserialize)]
pub struct NamedReport {
    pub model: String,
    #[serde(flatten)]
    pub report: MetricsReport,
}

/// Machine-readable counterpart of [`render_report`].
pub fn report_json(reports: &[(String, MetricsReport)]) -> String {
    let doc = ReportDocument {
        schema: REPORT_SCHEMA.to_string(),
        models: reports
            .iter()
            .map(|(model, report)| NamedReport {
                model: model.clone(),
                report: report.clone(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}
