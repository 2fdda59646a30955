//! Binary evaluation for the positive (harmful, label 1) class: confusion
//! counts, precision/recall/F1, ROC curve and AUC.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{predict_batch, ClassifierError, ClassifierModel, Label};
use crate::embedding::EmbeddingStore;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{labels} labels but {other} predictions or scores")]
    LengthMismatch { labels: usize, other: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("ROC/AUC needs both classes present")]
    SingleClass,
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("score at index {0} is NaN")]
    NanScore(usize),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / n as f64
        }
    }
}

fn check_binary(labels: &[Label]) -> Result<()> {
    match labels.iter().find(|&&l| l > 1) {
        Some(&bad) => Err(MetricsError::InvalidLabel(bad)),
        None => Ok(()),
    }
}

pub fn confusion(labels: &[Label], preds: &[Label]) -> Result<ConfusionCounts> {
    if labels.len() != preds.len() {
        return Err(MetricsError::LengthMismatch { labels: labels.len(), other: preds.len() });
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    check_binary(labels)?;
    check_binary(preds)?;
    let mut c = ConfusionCounts::default();
    for (&y, &p) in labels.iter().zip(preds) {
        match (y, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (0, 0) => c.tn += 1,
            _ => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Precision, recall and F1. A zero denominator yields 0 and sets the
/// matching `*_undefined` flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

pub fn prf1(c: &ConfusionCounts) -> Prf1 {
    let ratio = |num: u64, den: u64| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
    let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
    let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
    // 2pr/(p+r) reduces to 2tp/(2tp+fp+fn); a single division keeps it
    // correctly rounded. Undefined whenever p + r = 0.
    let (f1, f1_undefined) = if c.tp == 0 {
        (0.0, true)
    } else {
        ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
    };
    Prf1 { precision, recall, f1, precision_undefined, recall_undefined, f1_undefined }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from (0,0) to (1,1), one point per distinct score.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC by sweeping distinct score thresholds from high to low; equal
/// scores form one step. AUC by the trapezoid rule, accumulated in exact
/// integer arithmetic and divided once.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch { labels: labels.len(), other: scores.len() });
    }
    check_binary(labels)?;
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(MetricsError::NanScore(i));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::with_capacity(order.len() + 1);
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the area in units of 1/(pos*neg).
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = area2 as f64 / (2 * pos as u128 * neg as u128) as f64;
    Ok(RocCurve { points, auc })
}

/// Serialisable evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub auc: f64,
    pub roc: Vec<[f64; 2]>,
}

impl EvaluationReport {
    pub fn from_scores(scores: &[f64], preds: &[Label], labels: &[Label]) -> Result<Self> {
        let counts = confusion(labels, preds)?;
        let p = prf1(&counts);
        let roc = roc_auc(scores, labels)?;
        Ok(Self {
            counts,
            precision: p.precision,
            recall: p.recall,
            f1: p.f1,
            accuracy: counts.accuracy(),
            auc: roc.auc,
            roc: roc.points.iter().map(|&(x, y)| [x, y]).collect(),
        })
    }

    /// `fpr,tpr` CSV with a header row.
    pub fn write_roc_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "fpr,tpr")?;
        for [x, y] in &self.roc {
            writeln!(out, "{x},{y}")?;
        }
        Ok(())
    }
}

/// Predicts every row of `store` and scores the result against `labels`.
pub fn evaluate(model: &ClassifierModel, store: &EmbeddingStore, labels: &[Label]) -> Result<EvaluationReport> {
    if labels.len() != store.count() {
        return Err(MetricsError::LengthMismatch { labels: labels.len(), other: store.count() });
    }
    let preds = predict_batch(model, store)?;
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let labs: Vec<Label> = preds.iter().map(|p| p.label).collect();
    EvaluationReport::from_scores(&scores, &labs, labels)
}
