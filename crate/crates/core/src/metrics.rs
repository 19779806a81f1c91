//! Confusion matrix, accuracy, per-class and macro F1, and label jitter.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stage::{check_labels, Stage, NUM_STAGES};

/// `counts[true][predicted]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_STAGES]; NUM_STAGES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_STAGES).map(|c| self.counts[c][c]).sum()
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::shape("confusion", format!("{} predictions", truth.len()), predicted.len()));
    }
    check_labels(truth)?;
    check_labels(predicted)?;
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

/// Fraction of epochs on the diagonal.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::InvalidArgument("accuracy of an empty confusion matrix".into()));
    }
    Ok(cm.trace() as f64 / n as f64)
}

/// `2·TP / (2·TP + FP + FN)` per class, 0 when the class never occurs.
pub fn per_class_f1(cm: &ConfusionMatrix) -> [f64; NUM_STAGES] {
    let mut f1 = [0.0; NUM_STAGES];
    for (c, out) in f1.iter_mut().enumerate() {
        let tp = cm.counts[c][c];
        let fp: u64 = (0..NUM_STAGES).filter(|&t| t != c).map(|t| cm.counts[t][c]).sum();
        let fn_: u64 = (0..NUM_STAGES).filter(|&p| p != c).map(|p| cm.counts[c][p]).sum();
        let denom = 2 * tp + fp + fn_;
        *out = if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        };
    }
    f1
}

/// Unweighted mean over all five classes, absent ones included as 0.
pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    per_class_f1(cm).iter().sum::<f64>() / NUM_STAGES as f64
}

/// Number of positions whose label differs from the previous one.
pub fn transition_count(labels: &[usize]) -> usize {
    labels.windows(2).filter(|w| w[0] != w[1]).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub acc: f64,
    pub mf1: f64,
    pub per_class_f1: BTreeMap<String, f64>,
    pub confusion: [[u64; NUM_STAGES]; NUM_STAGES],
    pub transitions_raw: usize,
    pub transitions_corrected: Option<usize>,
}

/// Scores `predicted` against `truth`; `raw` (if given) is the uncorrected
/// prediction whose jitter is reported alongside. Without `raw`,
/// `predicted` itself is treated as the raw sequence.
pub fn report(truth: &[usize], predicted: &[usize], raw: Option<&[usize]>) -> Result<Report> {
    let cm = confusion(truth, predicted)?;
    let f1 = per_class_f1(&cm);
    let (transitions_raw, transitions_corrected) = match raw {
        Some(r) => (transition_count(r), Some(transition_count(predicted))),
        None => (transition_count(predicted), None),
    };
    Ok(Report {
        acc: accuracy(&cm)?,
        mf1: macro_f1(&cm),
        per_class_f1: Stage::ALL.iter().map(|s| (s.name().to_string(), f1[s.index()])).collect(),
        confusion: cm.counts,
        transitions_raw,
        transitions_corrected,
    })
}
