use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{argmax, build_encoder, mean, EVAL_BATCH};
use super::{BfmDataset, FpnetError, FpnetModel};
use crate::channel::SystemConfig;
use crate::codec::BfmMatrix;
use crate::metrics::sgcs;
use crate::nn::{mse, softmax_xent, Adam, Layer, Mode, Param, Sequential, Tensor};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub lr_stage1: f64,
    pub lr_stage2: f64,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    /// Epochs for each half of the sequential baseline.
    pub epochs_sequential: usize,
    pub batch: usize,
    pub seed: u64,
    /// Stop a stage once its validation score (accuracy in stage 1,
    /// combined loss in stage 2) has not improved for `patience` epochs.
    /// Stage 1 always keeps its best-accuracy epoch; stage 2 keeps its best
    /// epoch only when stopping early.
    pub early_stopping: bool,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 70.0,
            lr_stage1: 5e-4,
            lr_stage2: 1e-4,
            epochs_stage1: 100,
            epochs_stage2: 60,
            epochs_sequential: 60,
            batch: 64,
            seed: 0,
            early_stopping: false,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FpnetError> {
        let ok = self.alpha >= 0.0
            && self.lr_stage1 > 0.0
            && self.lr_stage2 > 0.0
            && self.lr_stage2 <= self.lr_stage1
            && self.batch > 0;
        if !ok {
            return Err(FpnetError::Config(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub stage: String,
    pub epoch: usize,
    pub loss: f64,
    pub loss_pos: f64,
    pub loss_bfm: f64,
    pub val_accuracy: Option<f64>,
    pub val_sgcs: Option<f64>,
}

fn epoch_order(n: usize, seed: u64, stage: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(rng::mix(seed, stage), epoch as u64));
    idx
}

fn check_finite(loss: f64, stage: &str, epoch: usize, batch: usize) -> Result<(), FpnetError> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(FpnetError::Diverged(format!("{stage} epoch {epoch} batch {batch}: loss {loss}")))
    }
}

fn collect<'a>(nets: Vec<&'a mut Sequential>) -> Vec<&'a mut Param> {
    let mut out = Vec::new();
    for n in nets {
        n.collect_params(&mut out);
    }
    out
}

/// Positioning pre-training of encoder and head on cross-entropy alone. With
/// early stopping on, the parameters with the best validation accuracy are
/// kept.
pub fn train_stage1(
    model: &mut FpnetModel,
    train: &BfmDataset,
    val: &BfmDataset,
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>, FpnetError> {
    cfg.validate()?;
    let labels = train.zone_labels()?;
    if train.is_empty() {
        return Err(FpnetError::EmptyData("stage 1 training set"));
    }
    model.encoder.set_quantizer(model.enc.quantize_in_stage1);
    let mut opt = Adam::new(cfg.lr_stage1);
    let mut logs = Vec::new();
    let mut best: Option<(f64, Sequential, Sequential)> = None;
    let mut since_best = 0;
    for epoch in 0..cfg.epochs_stage1 {
        let order = epoch_order(train.len(), cfg.seed, 1, epoch);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch).enumerate() {
            let x = train.batch(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            model.encoder.zero_grad();
            model.head.zero_grad();
            let code = model.encoder.forward(&x, Mode::Train)?;
            let logits = model.head.forward(&code, Mode::Train)?;
            let (loss, dlogits) = softmax_xent(&logits, &y)?;
            check_finite(loss, "stage1", epoch, bi)?;
            let dcode = model.head.backward(&dlogits)?;
            model.encoder.backward(&dcode)?;
            opt.update(&mut collect(vec![&mut model.encoder, &mut model.head]));
            total += loss * chunk.len() as f64;
        }
        let acc = positioning_accuracy(model, val)?;
        let loss = total / train.len() as f64;
        logs.push(EpochLog { stage: "stage1".into(), epoch, loss, loss_pos: loss, loss_bfm: 0.0, val_accuracy: acc, val_sgcs: None });
        // The best validation epoch is kept; early stopping only ends the
        // search sooner.
        let score = acc.unwrap_or(-loss);
        if best.as_ref().map_or(true, |(b, _, _)| score > *b) {
            best = Some((score, model.encoder.clone(), model.head.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.early_stopping && since_best >= cfg.patience {
                break;
            }
        }
    }
    if let Some((_, enc, head)) = best {
        model.encoder = enc;
        model.head = head;
    }
    model.encoder.set_quantizer(true);
    model.encoder.clear_cache();
    model.head.clear_cache();
    Ok(logs)
}

/// Accuracy of encoder + head alone; `None` for an empty set.
fn positioning_accuracy(model: &FpnetModel, data: &BfmDataset) -> Result<Option<f64>, FpnetError> {
    if data.is_empty() {
        return Ok(None);
    }
    let mut enc = model.encoder.clone();
    let mut head = model.head.clone();
    let labels = data.zone_labels()?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0;
    for chunk in idx.chunks(EVAL_BATCH) {
        let logits = head.forward(&enc.forward(&data.batch(chunk), Mode::Eval)?, Mode::Eval)?;
        correct += chunk.iter().enumerate().filter(|(j, &i)| argmax(logits.sample(*j)) == labels[i]).count();
    }
    Ok(Some(correct as f64 / data.len() as f64))
}

/// Joint fine-tuning of every parameter on `L_pos + alpha * L_bfm`.
pub fn train_stage2(
    model: &mut FpnetModel,
    train: &BfmDataset,
    val: &BfmDataset,
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>, FpnetError> {
    train_joint(model, train, val, cfg, cfg.epochs_stage2, "stage2", 2)
}

fn train_joint(
    model: &mut FpnetModel,
    train: &BfmDataset,
    val: &BfmDataset,
    cfg: &TrainConfig,
    epochs: usize,
    stage: &str,
    stream: u64,
) -> Result<Vec<EpochLog>, FpnetError> {
    cfg.validate()?;
    let labels = train.zone_labels()?;
    if train.is_empty() {
        return Err(FpnetError::EmptyData("joint training set"));
    }
    model.encoder.set_quantizer(true);
    let mut opt = Adam::new(cfg.lr_stage2);
    let mut logs = Vec::new();
    let mut best: Option<(f64, FpnetModel)> = None;
    let mut since_best = 0;
    for epoch in 0..epochs {
        let order = epoch_order(train.len(), cfg.seed, stream, epoch);
        let (mut tp, mut tb) = (0.0, 0.0);
        for (bi, chunk) in order.chunks(cfg.batch).enumerate() {
            let x = train.batch(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (lp, lb) = joint_gradients(model, &x, &y, cfg.alpha)?;
            check_finite(lp + cfg.alpha * lb, stage, epoch, bi)?;
            opt.update(&mut collect(vec![&mut model.encoder, &mut model.decoder, &mut model.head]));
            tp += lp * chunk.len() as f64;
            tb += lb * chunk.len() as f64;
        }
        let n = train.len() as f64;
        let (loss_pos, loss_bfm) = (tp / n, tb / n);
        let (val_accuracy, val_sgcs, val_loss) = if val.is_empty() {
            (None, None, loss_pos + cfg.alpha * loss_bfm)
        } else {
            let e = model.evaluate(val)?;
            let vl = if cfg.early_stopping { validation_loss(model, val, cfg.alpha)? } else { f64::NAN };
            (Some(e.accuracy), Some(e.sgcs), vl)
        };
        logs.push(EpochLog {
            stage: stage.into(),
            epoch,
            loss: loss_pos + cfg.alpha * loss_bfm,
            loss_pos,
            loss_bfm,
            val_accuracy,
            val_sgcs,
        });
        if cfg.early_stopping {
            if best.as_ref().map_or(true, |(b, _)| val_loss < *b) {
                best = Some((val_loss, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, m)) = best {
        *model = m;
    }
    model.encoder.clear_cache();
    model.decoder.clear_cache();
    model.head.clear_cache();
    Ok(logs)
}

/// Forward and backward pass of the combined loss without an optimizer
/// step. Returns `(L_pos, L_bfm)` and leaves the gradients in the parameters.
pub fn joint_gradients(model: &mut FpnetModel, x: &Tensor, y: &[usize], alpha: f64) -> Result<(f64, f64), FpnetError> {
    model.encoder.zero_grad();
    model.decoder.zero_grad();
    model.head.zero_grad();
    let code = model.encoder.forward(x, Mode::Train)?;
    let recon = model.decoder.forward(&code, Mode::Train)?;
    let logits = model.head.forward(&code, Mode::Train)?;
    let (lp, dlogits) = softmax_xent(&logits, y)?;
    let (lb, mut drecon) = mse(&recon, x)?;
    drecon.data.iter_mut().for_each(|g| *g *= alpha);
    let mut dcode = model.head.backward(&dlogits)?;
    let dcode_dec = model.decoder.backward(&drecon)?;
    for (a, b) in dcode.data.iter_mut().zip(&dcode_dec.data) {
        *a += b;
    }
    model.encoder.backward(&dcode)?;
    Ok((lp, lb))
}

fn validation_loss(model: &FpnetModel, data: &BfmDataset, alpha: f64) -> Result<f64, FpnetError> {
    let mut m = model.clone();
    let labels = data.zone_labels()?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(EVAL_BATCH) {
        let x = data.batch(chunk);
        let code = m.encoder.forward(&x, Mode::Eval)?;
        let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        let (lp, _) = softmax_xent(&m.head.forward(&code, Mode::Eval)?, &y)?;
        let (lb, _) = mse(&m.decoder.forward(&code, Mode::Eval)?, &x)?;
        total += (lp + alpha * lb) * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Both training steps back to back.
pub fn train_fpnet(
    model: &mut FpnetModel,
    train: &BfmDataset,
    val: &BfmDataset,
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>, FpnetError> {
    let mut logs = train_stage1(model, train, val, cfg)?;
    logs.extend(train_stage2(model, train, val, cfg)?);
    Ok(logs)
}

/// Continues joint training on `n_samples` entries of `data` (a seeded,
/// label-stratified pick), logging accuracy and SGCS on `eval` every epoch.
pub fn fine_tune(
    model: &mut FpnetModel,
    data: &BfmDataset,
    n_samples: usize,
    epochs: usize,
    eval: &BfmDataset,
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>, FpnetError> {
    if n_samples > data.len() {
        return Err(FpnetError::NotEnoughData { requested: n_samples, available: data.len() });
    }
    let subset = data.subset(&stratified_pick(data, n_samples, cfg.seed));
    let mut logs = Vec::new();
    if epochs == 0 || n_samples == 0 {
        return Ok(logs);
    }
    logs.extend(train_joint(model, &subset, eval, &TrainConfig { early_stopping: false, ..cfg.clone() }, epochs, "fine_tune", 3)?);
    Ok(logs)
}

/// Round-robin over labels of seeded per-label shuffles.
pub(crate) fn stratified_pick(data: &BfmDataset, n: usize, seed: u64) -> Vec<usize> {
    let mut groups: std::collections::BTreeMap<_, Vec<usize>> = Default::default();
    for (i, l) in data.labels.iter().enumerate() {
        groups.entry(l.zone()).or_default().push(i);
    }
    let mut queues: Vec<Vec<usize>> = groups
        .into_iter()
        .enumerate()
        .map(|(g, (_, mut v))| {
            v.shuffle(&mut rng::stream(rng::mix(seed, g as u64), 0x7069_636b));
            v.reverse();
            v
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut progressed = false;
        for q in queues.iter_mut() {
            if out.len() == n {
                break;
            }
            if let Some(i) = q.pop() {
                out.push(i);
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    out.sort_unstable();
    out
}

/// Feedback autoencoder and a separate classifier trained on its
/// reconstructions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequentialBaseline {
    pub autoencoder: FpnetModel,
    pub classifier: Sequential,
}

impl SequentialBaseline {
    pub fn reconstruct(&self, data: &BfmDataset) -> Result<BfmDataset, FpnetError> {
        let mut enc = self.autoencoder.encoder.clone();
        let mut dec = self.autoencoder.decoder.clone();
        let idx: Vec<usize> = (0..data.len()).collect();
        let mut x = Vec::with_capacity(data.x.len());
        for chunk in idx.chunks(EVAL_BATCH) {
            x.extend(dec.forward(&enc.forward(&data.batch(chunk), Mode::Eval)?, Mode::Eval)?.data);
        }
        Ok(BfmDataset { x, ..data.clone() })
    }

    /// `(sgcs, accuracy)`.
    pub fn evaluate(&self, data: &BfmDataset) -> Result<(f64, f64), FpnetError> {
        let recon = self.reconstruct(data)?;
        let s: Vec<f64> = (0..data.len())
            .map(|i| sgcs(&recon.matrix(i), &data.matrix(i)))
            .collect::<Result<_, _>>()?;
        let preds = classify(&self.classifier, &recon)?;
        let correct = preds.iter().zip(&data.labels).filter(|(p, l)| l.zone() == Some(**p)).count();
        Ok((mean(&s), correct as f64 / data.len().max(1) as f64))
    }
}

fn classify(net: &Sequential, data: &BfmDataset) -> Result<Vec<usize>, FpnetError> {
    let mut net = net.clone();
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(EVAL_BATCH) {
        let logits = net.forward(&data.batch(chunk), Mode::Eval)?;
        out.extend((0..chunk.len()).map(|j| argmax(logits.sample(j))));
    }
    Ok(out)
}

/// Trains the feedback autoencoder on reconstruction error alone, then a
/// classifier with the encoder-plus-head architecture (unquantized) on the
/// reconstructed matrices.
pub fn train_sequential_baseline(
    sys: &SystemConfig,
    enc: &super::EncoderConfig,
    n_classes: usize,
    train: &BfmDataset,
    val: &BfmDataset,
    cfg: &TrainConfig,
) -> Result<(SequentialBaseline, Vec<EpochLog>), FpnetError> {
    cfg.validate()?;
    let labels = train.zone_labels()?;
    let mut ae = super::build_model(sys, enc, n_classes, cfg.seed)?;
    let mut logs = Vec::new();
    let mut opt = Adam::new(cfg.lr_stage1);
    for epoch in 0..cfg.epochs_sequential {
        let order = epoch_order(train.len(), cfg.seed, 4, epoch);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch).enumerate() {
            let x = train.batch(chunk);
            ae.encoder.zero_grad();
            ae.decoder.zero_grad();
            let recon = ae.decoder.forward(&ae.encoder.forward(&x, Mode::Train)?, Mode::Train)?;
            let (lb, drecon) = mse(&recon, &x)?;
            check_finite(lb, "autoencoder", epoch, bi)?;
            let dcode = ae.decoder.backward(&drecon)?;
            ae.encoder.backward(&dcode)?;
            opt.update(&mut collect(vec![&mut ae.encoder, &mut ae.decoder]));
            total += lb * chunk.len() as f64;
        }
        logs.push(EpochLog {
            stage: "autoencoder".into(),
            epoch,
            loss: total / train.len() as f64,
            loss_pos: 0.0,
            loss_bfm: total / train.len() as f64,
            val_accuracy: None,
            val_sgcs: None,
        });
    }
    ae.encoder.clear_cache();
    ae.decoder.clear_cache();

    let mut base = SequentialBaseline { autoencoder: ae, classifier: Sequential::default() };
    let recon_train = base.reconstruct(train)?;
    let recon_val = base.reconstruct(val)?;
    let shape = super::bfm_shape(sys);
    let mut r = rng::stream(cfg.seed, 0x636c_6173);
    let mut clf = build_encoder(shape, enc.conv_filters, enc.kernel, enc.codeword_len, None, &mut r)?;
    clf.layers.push(Layer::dense(enc.codeword_len, n_classes, &mut r));
    let mut opt = Adam::new(cfg.lr_stage1);
    let mut best: Option<(f64, Sequential)> = None;
    let val_labels = val.zone_labels()?;
    for epoch in 0..cfg.epochs_sequential {
        let order = epoch_order(train.len(), cfg.seed, 5, epoch);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch).enumerate() {
            let x = recon_train.batch(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            clf.zero_grad();
            let (loss, d) = softmax_xent(&clf.forward(&x, Mode::Train)?, &y)?;
            check_finite(loss, "classifier", epoch, bi)?;
            clf.backward(&d)?;
            opt.update(&mut clf.params());
            total += loss * chunk.len() as f64;
        }
        let acc = if val.is_empty() {
            None
        } else {
            let p = classify(&clf, &recon_val)?;
            Some(p.iter().zip(&val_labels).filter(|(a, b)| a == b).count() as f64 / val.len() as f64)
        };
        logs.push(EpochLog {
            stage: "classifier".into(),
            epoch,
            loss: total / train.len() as f64,
            loss_pos: total / train.len() as f64,
            loss_bfm: 0.0,
            val_accuracy: acc,
            val_sgcs: None,
        });
        let score = acc.unwrap_or(0.0);
        if best.as_ref().map_or(true, |(b, _)| score > *b) {
            best = Some((score, clf.clone()));
        }
    }
    clf = best.map(|(_, c)| c).unwrap_or(clf);
    clf.clear_cache();
    base.classifier = clf;
    Ok((base, logs))
}

/// Convenience for callers holding plain matrices.
pub fn reconstruct_matrix(model: &FpnetModel, v: &BfmMatrix) -> Result<BfmMatrix, FpnetError> {
    Ok(model.infer(v)?.v_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_environment_with, sample_all_zones, EnvParams, DEFAULT_CAPTURE_SNR_DB};
    use crate::fpnet::{build_model, decode_model, encode_model, EncoderConfig, Manifest};

    fn toy(n_zones: usize, per_zone: usize, seed: u64) -> (SystemConfig, BfmDataset) {
        let sys = SystemConfig::default();
        let env = generate_environment_with(&sys, &EnvParams::default(), n_zones, 30, 7).unwrap();
        let batch = sample_all_zones(&sys, &env, per_zone, 0, DEFAULT_CAPTURE_SNR_DB, seed).unwrap();
        (sys.clone(), BfmDataset::from_batch(&batch, sys.n_streams).unwrap())
    }

    fn flat(model: &mut FpnetModel) -> Vec<f64> {
        use crate::fpnet::Stateful;
        model.state().iter().flat_map(|p| p.value.clone()).collect()
    }

    #[test]
    fn two_zone_toy_is_learned_in_stage_one() {
        let (sys, train) = toy(2, 60, 1);
        let (_, val) = toy(2, 40, 2);
        let mut m = build_model(&sys, &EncoderConfig::default(), 2, 3).unwrap();
        let cfg = TrainConfig { epochs_stage1: 50, ..Default::default() };
        let logs = train_stage1(&mut m, &train, &val, &cfg).unwrap();
        let acc = logs.last().unwrap().val_accuracy.unwrap();
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn stage_one_returns_its_best_validation_epoch() {
        let (sys, train) = toy(4, 12, 1);
        let (_, val) = toy(4, 10, 2);
        let mut m = build_model(&sys, &EncoderConfig::default(), 4, 3).unwrap();
        let cfg = TrainConfig { epochs_stage1: 12, batch: 8, ..Default::default() };
        let logs = train_stage1(&mut m, &train, &val, &cfg).unwrap();
        let best = logs.iter().filter_map(|l| l.val_accuracy).fold(0.0, f64::max);
        assert_eq!(positioning_accuracy(&m, &val).unwrap(), Some(best));
    }

    #[test]
    fn zero_epochs_leave_the_model_untouched() {
        let (sys, data) = toy(2, 8, 1);
        let mut m = build_model(&sys, &EncoderConfig::default(), 2, 3).unwrap();
        let before = flat(&mut m);
        let cfg = TrainConfig { epochs_stage1: 0, epochs_stage2: 0, ..Default::default() };
        assert!(train_fpnet(&mut m, &data, &data, &cfg).unwrap().is_empty());
        assert!(fine_tune(&mut m, &data, 4, 0, &data, &cfg).unwrap().is_empty());
        assert_eq!(before, flat(&mut m));
    }

    #[test]
    fn training_is_deterministic() {
        let (sys, data) = toy(3, 10, 1);
        let cfg = TrainConfig { epochs_stage1: 2, epochs_stage2: 1, batch: 8, ..Default::default() };
        let run = || {
            let mut m = build_model(&sys, &EncoderConfig::default(), 3, 5).unwrap();
            let logs = train_fpnet(&mut m, &data, &data, &cfg).unwrap();
            (logs, flat(&mut m))
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn reported_loss_is_position_plus_weighted_reconstruction() {
        let (sys, data) = toy(2, 8, 1);
        let mut m = build_model(&sys, &EncoderConfig::default(), 2, 3).unwrap();
        let cfg = TrainConfig { epochs_stage2: 2, alpha: 30.0, batch: 4, ..Default::default() };
        for l in train_stage2(&mut m, &data, &data, &cfg).unwrap() {
            assert!((l.loss - (l.loss_pos + 30.0 * l.loss_bfm)).abs() < 1e-12);
            assert!(l.val_accuracy.is_some() && l.val_sgcs.is_some());
        }
    }

    #[test]
    fn stage_two_starts_from_the_saved_stage_one_state() {
        let (sys, data) = toy(2, 8, 1);
        let mut m = build_model(&sys, &EncoderConfig::default(), 2, 3).unwrap();
        let cfg = TrainConfig { epochs_stage1: 2, epochs_stage2: 0, batch: 4, ..Default::default() };
        train_stage1(&mut m, &data, &data, &cfg).unwrap();
        m.round_to_f32();
        let bytes = encode_model(&m, &Manifest { stage: "stage1".into(), ..Default::default() }).unwrap();
        let (mut saved, manifest): (FpnetModel, _) = decode_model(&bytes).unwrap();
        assert_eq!(manifest.stage, "stage1");
        train_stage2(&mut m, &data, &data, &cfg).unwrap();
        let enc: Vec<f64> = m.encoder.params().iter().chain(m.head.params().iter()).flat_map(|p| p.value.clone()).collect();
        let enc_saved: Vec<f64> =
            saved.encoder.params().iter().chain(saved.head.params().iter()).flat_map(|p| p.value.clone()).collect();
        assert_eq!(enc, enc_saved);
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let (sys, data) = toy(2, 3, 1);
        for seed in 0..5 {
            let mut m = build_model(&sys, &EncoderConfig::default(), 2, seed).unwrap();
            m.encoder.set_quantizer(false);
            let x = data.batch(&[0, 1, 3, 4]);
            let y = [0, 0, 1, 1];
            joint_gradients(&mut m, &x, &y, 70.0).unwrap();
            let analytic: Vec<Vec<f64>> = m.encoder.params().iter().map(|p| p.grad.clone()).collect();
            let loss = |m: &mut FpnetModel| {
                let (lp, lb) = joint_gradients(m, &x, &y, 70.0).unwrap();
                lp + 70.0 * lb
            };
            let h = 1e-6;
            for (pi, g) in analytic.iter().enumerate() {
                for idx in [0, g.len() / 2, g.len() - 1] {
                    let orig = m.encoder.params()[pi].value[idx];
                    m.encoder.params()[pi].value[idx] = orig + h;
                    let up = loss(&mut m);
                    m.encoder.params()[pi].value[idx] = orig - h;
                    let down = loss(&mut m);
                    m.encoder.params()[pi].value[idx] = orig;
                    let fd = (up - down) / (2.0 * h);
                    // Conv biases feeding batch norm have exactly zero gradient, so
                    // the absolute term absorbs finite-difference rounding there.
                    let err = (fd - g[idx]).abs();
                    assert!(err < 1e-3 * fd.abs().max(g[idx].abs()) + 1e-7, "seed {seed} param {pi}[{idx}]: fd {fd} analytic {}", g[idx]);
                }
            }
        }
    }

    #[test]
    fn fine_tune_rejects_oversized_budgets_and_stratifies() {
        let (sys, data) = toy(4, 5, 1);
        let mut m = build_model(&sys, &EncoderConfig::default(), 4, 3).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(
            fine_tune(&mut m, &data, 21, 1, &data, &cfg),
            Err(FpnetError::NotEnoughData { requested: 21, available: 20 })
        ));
        let pick = stratified_pick(&data, 8, 0);
        let zones = data.subset(&pick).zone_labels().unwrap();
        for z in 0..4 {
            assert_eq!(zones.iter().filter(|&&l| l == z).count(), 2);
        }
    }

    #[test]
    fn sequential_baseline_trains_and_round_trips() {
        let (sys, data) = toy(2, 6, 1);
        let cfg = TrainConfig { epochs_sequential: 1, batch: 4, ..Default::default() };
        let (mut base, logs) = train_sequential_baseline(&sys, &EncoderConfig::default(), 2, &data, &data, &cfg).unwrap();
        assert_eq!(logs.len(), 2);
        base.autoencoder.round_to_f32();
        base.classifier.round_to_f32();
        let (back, _): (SequentialBaseline, _) = decode_model(&encode_model(&base, &Manifest::default()).unwrap()).unwrap();
        assert_eq!(base.evaluate(&data).unwrap(), back.evaluate(&data).unwrap());
    }
}
