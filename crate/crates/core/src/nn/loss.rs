use super::{NnError, Tensor};

/// Row-wise softmax of `[batch, classes]` logits.
pub fn softmax(logits: &Tensor) -> Result<Tensor, NnError> {
    logits.ensure_finite("in logits")?;
    let c = logits.sample_len();
    let mut out = logits.clone();
    for row in out.data.chunks_exact_mut(c) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    Ok(out)
}

/// Mean cross-entropy of softmax(logits) against integer labels, with its
/// gradient with respect to the logits.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), NnError> {
    let b = logits.batch();
    let c = logits.sample_len();
    if labels.len() != b {
        return Err(NnError::Shape(format!("{} labels for a batch of {b}", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(NnError::InvalidLabel { label, classes: c });
    }
    let mut grad = softmax(logits)?;
    let mut loss = 0.0;
    for (row, &l) in grad.data.chunks_exact_mut(c).zip(labels) {
        loss -= row[l].max(f64::MIN_POSITIVE).ln();
        row[l] -= 1.0;
        row.iter_mut().for_each(|v| *v /= b as f64);
    }
    Ok((loss / b as f64, grad))
}

/// Mean squared error over all entries and its gradient with respect to `a`.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<(f64, Tensor), NnError> {
    if a.shape != b.shape {
        return Err(NnError::Shape(format!("mse of {:?} and {:?}", a.shape, b.shape)));
    }
    let n = a.len().max(1) as f64;
    let diff: Vec<f64> = a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = Tensor { shape: a.shape.clone(), data: diff.iter().map(|d| 2.0 * d / n).collect() };
    Ok((loss, grad))
}
