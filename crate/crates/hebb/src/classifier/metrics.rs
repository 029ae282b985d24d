//! Classification metrics from a 10-class confusion matrix.

use crate::error::{Error, Result};

pub const CLASSES: usize = 10;

/// Accuracy plus macro-averaged precision/recall/F1 and the raw
/// confusion matrix, indexed `confusion[true][predicted]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: [[usize; CLASSES]; CLASSES],
}

/// Compute metrics from parallel prediction/label vectors. Macro averages
/// run over the classes that occur in either vector; per-class F1 is
/// 2TP / (2TP + FP + FN).
pub fn compute_metrics(predictions: &[u8], labels: &[u8]) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(Error::Parameter("cannot compute metrics on empty input".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut confusion = [[0usize; CLASSES]; CLASSES];
    for (&p, &t) in predictions.iter().zip(labels) {
        if p as usize >= CLASSES || t as usize >= CLASSES {
            return Err(Error::Parameter(format!("class out of range: pred {p}, label {t}")));
        }
        confusion[t as usize][p as usize] += 1;
    }
    let total: usize = predictions.len();
    let trace: usize = (0..CLASSES).map(|c| confusion[c][c]).sum();
    let accuracy = trace as f64 / total as f64;

    let (mut psum, mut rsum, mut fsum, mut present) = (0.0, 0.0, 0.0, 0usize);
    for c in 0..CLASSES {
        let tp = confusion[c][c];
        let fp: usize = (0..CLASSES).filter(|&t| t != c).map(|t| confusion[t][c]).sum();
        let fn_: usize = (0..CLASSES).filter(|&p| p != c).map(|p| confusion[c][p]).sum();
        if tp + fp + fn_ == 0 {
            continue; // class absent from both vectors
        }
        present += 1;
        if tp + fp > 0 {
            psum += tp as f64 / (tp + fp) as f64;
        }
        if tp + fn_ > 0 {
            rsum += tp as f64 / (tp + fn_) as f64;
        }
        fsum += 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
    }
    let k = present.max(1) as f64;
    Ok(MetricsReport {
        accuracy,
        macro_precision: psum / k,
        macro_recall: rsum / k,
        macro_f1: fsum / k,
        confusion,
    })
}
