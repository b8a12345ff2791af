use serde::{Deserialize, Serialize};

use super::MetricsError;

pub fn accuracy<T: PartialEq>(preds: &[T], labels: &[T]) -> Result<f64, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::Shape(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    if preds.is_empty() {
        return Err(MetricsError::TooFewPoints { needed: 1, got: 0 });
    }
    Ok(preds.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / preds.len() as f64)
}

/// Top-1 accuracy over class indices.
pub fn classification_metrics(preds: &[usize], labels: &[usize]) -> Result<f64, MetricsError> {
    accuracy(preds, labels)
}

/// Detection confusion counts with derived rates. A ratio whose denominator
/// is zero is `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `flags[i]` is the detector's verdict, `truth[i]` whether sample `i` is
/// really anomalous.
pub fn ad_metrics(flags: &[bool], truth: &[bool]) -> Result<AdMetrics, MetricsError> {
    if flags.len() != truth.len() {
        return Err(MetricsError::Shape(format!("{} flags for {} ground-truth values", flags.len(), truth.len())));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&f, &t) in flags.iter().zip(truth) {
        match (f, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let tpr = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    let f1 = match (precision, tpr) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(AdMetrics { tp, fp, tn, fn_, tpr, fpr: ratio(fp, fp + tn), precision, f1 })
}

/// One method's row in a results table. Fields that do not apply to the
/// method are left empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub feedback_bits: Option<usize>,
    pub sgcs: Option<f64>,
    pub accuracy: Option<f64>,
    pub evm_db: Option<f64>,
    pub r_gross: Option<f64>,
    pub r_net: Option<f64>,
    pub detection: Option<AdMetrics>,
}
