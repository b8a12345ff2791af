//! Access-point-side anomaly detector: an unquantized autoencoder over the
//! feedback decoder's reconstructions, scored by its own reconstruction MSE.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::codec::BfmMatrix;
use crate::fpnet::{BfmDataset, FpnetError, FpnetModel, Stateful, EVAL_BATCH, LEAKY_SLOPE, RESBLOCK_WIDTHS};
use crate::metrics::{ad_metrics, AdMetrics};
use crate::nn::{mse, Adam, Layer, Mode, NnError, Param, Sequential, Tensor};
use crate::rng;

#[derive(Debug, thiserror::Error)]
pub enum AdError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Fpnet(#[from] FpnetError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdConfig {
    /// Calibrated decision threshold in MSE units.
    pub threshold: Option<f64>,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub kernel: usize,
    pub latent_len: usize,
    pub residual_blocks: usize,
    /// Number of thresholds in the calibration sweep.
    pub sweep_points: usize,
}

impl Default for AdConfig {
    fn default() -> Self {
        Self {
            threshold: None,
            epochs: 60,
            lr: 1e-4,
            batch: 64,
            seed: 0,
            kernel: 3,
            latent_len: 20,
            residual_blocks: 2,
            sweep_points: 400,
        }
    }
}

impl AdConfig {
    pub fn validate(&self) -> Result<(), AdError> {
        let ok = self.lr > 0.0
            && self.batch > 0
            && self.kernel % 2 == 1
            && self.latent_len > 0
            && self.sweep_points >= 2
            && self.threshold.map_or(true, |t| t > 0.0 && t.is_finite());
        if !ok {
            return Err(AdError::Config(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdblockModel {
    pub shape: [usize; 3],
    pub latent_len: usize,
    pub kernel: usize,
    pub encoder: Sequential,
    pub decoder: Sequential,
}

impl Stateful for AdblockModel {
    fn state(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        self.encoder.collect_state(&mut out);
        self.decoder.collect_state(&mut out);
        out
    }
}

pub fn build_adblock(shape: [usize; 3], cfg: &AdConfig) -> Result<AdblockModel, AdError> {
    cfg.validate()?;
    let mut r = rng::stream(cfg.seed, 0x6164_626c);
    let flat = shape[0] * shape[1] * 2;
    let encoder = Sequential::new(vec![
        Layer::conv2d(shape[2], 2, cfg.kernel, &mut r),
        Layer::batch_norm(2),
        Layer::reshape(vec![flat]),
        Layer::dense(flat, cfg.latent_len, &mut r),
        Layer::tanh(),
    ]);
    let mut dec = vec![Layer::dense(cfg.latent_len, shape.iter().product(), &mut r), Layer::reshape(shape.to_vec())];
    for _ in 0..cfg.residual_blocks {
        let mut body = Vec::new();
        let mut prev = shape[2];
        for (i, &w) in RESBLOCK_WIDTHS.iter().enumerate() {
            let last = i + 1 == RESBLOCK_WIDTHS.len();
            let out = if last { shape[2] } else { w };
            body.push(Layer::conv2d(prev, out, cfg.kernel, &mut r));
            if !last {
                body.push(Layer::leaky_relu(LEAKY_SLOPE));
            }
            prev = out;
        }
        dec.push(Layer::residual(Sequential::new(body), LEAKY_SLOPE));
    }
    dec.push(Layer::conv2d(shape[2], shape[2], cfg.kernel, &mut r));
    Ok(AdblockModel { shape, latent_len: cfg.latent_len, kernel: cfg.kernel, encoder, decoder: Sequential::new(dec) })
}

/// The feedback decoder's outputs for `data`, as a dataset with the same
/// labels. These are what the access point sees.
pub fn decoder_outputs(fpnet: &FpnetModel, data: &BfmDataset) -> Result<BfmDataset, AdError> {
    if data.is_empty() {
        return Ok(data.clone());
    }
    let ev = fpnet.evaluate(data)?;
    Ok(BfmDataset { x: ev.reconstructions, ..data.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdEpochLog {
    pub epoch: usize,
    pub loss: f64,
}

/// Trains on the reconstructions of normal data only. The feedback model is
/// borrowed immutably, so it cannot change.
pub fn train_adblock(
    fpnet: &FpnetModel,
    normal: &BfmDataset,
    cfg: &AdConfig,
) -> Result<(AdblockModel, Vec<AdEpochLog>), AdError> {
    if normal.is_empty() {
        return Err(AdError::Empty("normal training set"));
    }
    if normal.labels.iter().any(|l| l.zone().is_none()) {
        return Err(AdError::Config("anomaly detector must be trained on in-region data only".into()));
    }
    let inputs = decoder_outputs(fpnet, normal)?;
    train_on_reconstructions(&inputs, cfg)
}

/// Training loop over already reconstructed inputs.
pub fn train_on_reconstructions(
    inputs: &BfmDataset,
    cfg: &AdConfig,
) -> Result<(AdblockModel, Vec<AdEpochLog>), AdError> {
    if inputs.is_empty() {
        return Err(AdError::Empty("normal training set"));
    }
    let mut model = build_adblock(inputs.sample_shape, cfg)?;
    let mut opt = Adam::new(cfg.lr);
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        order.shuffle(&mut rng::stream(rng::mix(cfg.seed, 0x6164), epoch as u64));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let x = inputs.batch(chunk);
            model.encoder.zero_grad();
            model.decoder.zero_grad();
            let code = model.encoder.forward(&x, Mode::Train)?;
            let out = model.decoder.forward(&code, Mode::Train)?;
            let (loss, d) = mse(&out, &x)?;
            let dcode = model.decoder.backward(&d)?;
            model.encoder.backward(&dcode)?;
            let mut params = model.encoder.params();
            model.decoder.collect_params(&mut params);
            opt.update(&mut params);
            total += loss * chunk.len() as f64;
        }
        logs.push(AdEpochLog { epoch, loss: total / inputs.len() as f64 });
    }
    model.encoder.clear_cache();
    model.decoder.clear_cache();
    Ok((model, logs))
}

impl AdblockModel {
    fn check_shape(&self, shape: [usize; 3]) -> Result<(), AdError> {
        if shape != self.shape {
            return Err(AdError::Shape(format!("detector expects {:?}, got {shape:?}", self.shape)));
        }
        Ok(())
    }

    fn run(&self, x: &Tensor) -> Result<Tensor, AdError> {
        let mut enc = self.encoder.clone();
        let mut dec = self.decoder.clone();
        Ok(dec.forward(&enc.forward(x, Mode::Eval)?, Mode::Eval)?)
    }

    /// Mean squared difference between `v_prime` and its reconstruction,
    /// averaged over all real and imaginary entries.
    pub fn anomaly_score(&self, v_prime: &BfmMatrix) -> Result<f64, AdError> {
        let x = v_prime.to_real();
        self.check_shape([v_prime.n_subcarriers(), v_prime.n_tx * v_prime.n_streams, 2])?;
        let out = self.run(&Tensor::stack(&[&x], &self.shape)?)?;
        Ok(mean_sq_diff(&out.data, &x))
    }

    /// Scores for every entry of a reconstructed dataset, in order.
    pub fn scores(&self, v_prime: &BfmDataset) -> Result<Vec<f64>, AdError> {
        self.check_shape(v_prime.sample_shape)?;
        let idx: Vec<usize> = (0..v_prime.len()).collect();
        let mut out = Vec::with_capacity(v_prime.len());
        for chunk in idx.chunks(EVAL_BATCH) {
            let x = v_prime.batch(chunk);
            let y = self.run(&x)?;
            let n = x.sample_len();
            out.extend((0..chunk.len()).map(|j| mean_sq_diff(&y.data[j * n..(j + 1) * n], &x.data[j * n..(j + 1) * n])));
        }
        Ok(out)
    }

    pub fn detect(&self, v_prime: &BfmMatrix, threshold: f64) -> Result<Verdict, AdError> {
        Ok(detect(self.anomaly_score(v_prime)?, threshold))
    }

    pub fn round_to_f32(&mut self) {
        self.encoder.round_to_f32();
        self.decoder.round_to_f32();
    }
}

fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Normal,
    Anomalous,
}

/// Anomalous only when the score strictly exceeds the threshold.
pub fn detect(score: f64, threshold: f64) -> Verdict {
    if score > threshold {
        Verdict::Anomalous
    } else {
        Verdict::Normal
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub precision: Option<f64>,
    pub f1: f64,
    pub metrics: AdMetrics,
}

/// Detection rates at one threshold, anomalies being the positive class.
pub fn rates_at(normal: &[f64], anomaly: &[f64], threshold: f64) -> SweepPoint {
    let mut truth = vec![false; normal.len()];
    truth.extend(std::iter::repeat(true).take(anomaly.len()));
    let flagged: Vec<bool> =
        normal.iter().chain(anomaly).map(|&s| detect(s, threshold) == Verdict::Anomalous).collect();
    let m = ad_metrics(&flagged, &truth).expect("flags and truth have equal length");
    SweepPoint {
        threshold,
        tpr: m.tpr.unwrap_or(0.0),
        fpr: m.fpr.unwrap_or(0.0),
        precision: m.precision,
        f1: m.f1.unwrap_or(0.0),
        metrics: m,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    /// Sorted by increasing threshold.
    pub points: Vec<SweepPoint>,
    pub best: usize,
}

impl SweepCurve {
    pub fn lambda(&self) -> f64 {
        self.points[self.best].threshold
    }

    pub fn best_point(&self) -> &SweepPoint {
        &self.points[self.best]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,tpr,fpr,precision,f1\n");
        for p in &self.points {
            let prec = p.precision.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{},{},{}\n", p.threshold, p.tpr, p.fpr, prec, p.f1));
        }
        s
    }
}

/// Evaluates `points` evenly spaced thresholds over `[min, max]` of all
/// scores and picks the best F1, preferring lower false-positive rate and
/// then the smaller threshold on ties.
pub fn sweep_threshold(normal: &[f64], anomaly: &[f64], points: usize) -> Result<SweepCurve, AdError> {
    if normal.is_empty() || anomaly.is_empty() {
        return Err(AdError::Empty("both score sets must be non-empty"));
    }
    if points < 2 {
        return Err(AdError::Config("sweep needs at least two thresholds".into()));
    }
    if normal.iter().chain(anomaly).any(|s| !s.is_finite()) {
        return Err(AdError::Config("non-finite score".into()));
    }
    let lo = normal.iter().chain(anomaly).copied().fold(f64::INFINITY, f64::min);
    let hi = normal.iter().chain(anomaly).copied().fold(f64::NEG_INFINITY, f64::max);
    let pts: Vec<SweepPoint> = (0..points)
        .map(|i| {
            let t = if i + 1 == points { hi } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 };
            rates_at(normal, anomaly, t)
        })
        .collect();
    let best = (0..pts.len()).fold(0, |b, i| {
        let (p, q) = (&pts[i], &pts[b]);
        if p.f1 > q.f1 || (p.f1 == q.f1 && p.fpr < q.fpr) {
            i
        } else {
            b
        }
    });
    Ok(SweepCurve { points: pts, best })
}

/// Per-class thresholds: each class's normal scores are swept against all
/// anomaly scores. Classes without normal scores fall back to `global`.
pub fn per_class_thresholds(
    normal: &[f64],
    normal_class: &[usize],
    anomaly: &[f64],
    n_classes: usize,
    points: usize,
    global: f64,
) -> Result<Vec<f64>, AdError> {
    if normal.len() != normal_class.len() {
        return Err(AdError::Shape("one class per normal score".into()));
    }
    (0..n_classes)
        .map(|c| {
            let mine: Vec<f64> = normal.iter().zip(normal_class).filter(|(_, &k)| k == c).map(|(s, _)| *s).collect();
            if mine.is_empty() {
                Ok(global)
            } else {
                Ok(sweep_threshold(&mine, anomaly, points)?.lambda())
            }
        })
        .collect()
}

/// Fraction of out-of-region inputs assigned to each class by the
/// positioning head, with detection disabled.
pub fn misrouting_report(fpnet: &FpnetModel, ood: &BfmDataset) -> Result<Vec<f64>, AdError> {
    if ood.is_empty() {
        return Err(AdError::Empty("out-of-region set"));
    }
    let ev = fpnet.evaluate(ood)?;
    let mut hist = vec![0.0; fpnet.n_classes];
    for p in ev.predictions {
        hist[p] += 1.0;
    }
    let n = ood.len() as f64;
    hist.iter_mut().for_each(|h| *h /= n);
    Ok(hist)
}
