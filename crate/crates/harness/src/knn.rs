use fpnet_core::fpnet::BfmDataset;

use crate::HarnessError;

/// Distance-weighted k-nearest-neighbour vote in Euclidean distance over
/// vectorized beamforming matrices. Weights are inverse distances; if any
/// neighbour coincides with the query, only the coincident ones vote.
/// Returns one predicted zone per `test` entry.
pub fn knn_predict(train: &BfmDataset, test: &BfmDataset, k: usize) -> Result<Vec<usize>, HarnessError> {
    if k == 0 || k > train.len() {
        return Err(HarnessError::Config(format!("k = {k} needs 1..={} training points", train.len())));
    }
    if train.sample_shape != test.sample_shape {
        return Err(HarnessError::Config("train and test shapes differ".into()));
    }
    let labels = train.zone_labels()?;
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train.len());
    (0..test.len())
        .map(|i| {
            let q = test.sample(i);
            dist.clear();
            dist.extend((0..train.len()).map(|j| {
                let d2: f64 = q.iter().zip(train.sample(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2.sqrt(), labels[j])
            }));
            dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let near = &dist[..k];
            let mut votes = vec![0.0; n_classes];
            if near.iter().any(|(d, _)| *d == 0.0) {
                near.iter().filter(|(d, _)| *d == 0.0).for_each(|(_, l)| votes[*l] += 1.0);
            } else {
                near.iter().for_each(|(d, l)| votes[*l] += 1.0 / d);
            }
            Ok((0..n_classes).fold(0, |b, c| if votes[c] > votes[b] { c } else { b }))
        })
        .collect()
}

pub fn knn_accuracy(train: &BfmDataset, test: &BfmDataset, k: usize) -> Result<f64, HarnessError> {
    let preds = knn_predict(train, test, k)?;
    let truth = test.zone_labels()?;
    Ok(fpnet_core::metrics::accuracy(&preds, &truth)?)
}

/// Picks k from `grid` by validation accuracy (smallest k on ties) and
/// returns `(k, test accuracy)`.
pub fn knn_baseline(
    train: &BfmDataset,
    val: &BfmDataset,
    test: &BfmDataset,
    grid: &[usize],
) -> Result<(usize, f64), HarnessError> {
    let mut best: Option<(f64, usize)> = None;
    for &k in grid {
        let acc = knn_accuracy(train, val, k)?;
        if best.map_or(true, |(b, bk)| acc > b || (acc == b && k < bk)) {
            best = Some((acc, k));
        }
    }
    let (_, k) = best.ok_or_else(|| HarnessError::Config("empty k grid".into()))?;
    Ok((k, knn_accuracy(train, test, k)?))
}
