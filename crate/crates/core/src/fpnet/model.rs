use serde::{Deserialize, Serialize};

use super::{BfmDataset, FpnetError};
use crate::channel::SystemConfig;
use crate::codec::BfmMatrix;
use crate::metrics::sgcs;
use crate::nn::{softmax, Layer, Mode, NnError, Sequential, Tensor};
use crate::rng;

pub const LEAKY_SLOPE: f64 = 0.3;
/// Channel widths inside one decoder residual block.
pub const RESBLOCK_WIDTHS: [usize; 4] = [8, 16, 32, 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub codeword_len: usize,
    pub quant_bits: u32,
    pub conv_filters: usize,
    pub kernel: usize,
    /// Quantize during positioning pre-training as well as afterwards.
    pub quantize_in_stage1: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { codeword_len: 20, quant_bits: 5, conv_filters: 2, kernel: 3, quantize_in_stage1: true }
    }
}

impl EncoderConfig {
    pub fn feedback_bits(&self) -> usize {
        self.codeword_len * self.quant_bits as usize
    }

    pub fn validate(&self) -> Result<(), FpnetError> {
        if self.codeword_len == 0 || self.conv_filters == 0 || self.kernel % 2 == 0 {
            return Err(FpnetError::Config(format!("invalid encoder config {self:?}")));
        }
        if !(1..=16).contains(&self.quant_bits) {
            return Err(NnError::InvalidBits(self.quant_bits).into());
        }
        Ok(())
    }
}

/// `[tones, n_tx * n_streams, 2]`.
pub fn bfm_shape(sys: &SystemConfig) -> [usize; 3] {
    [sys.n_valid_subcarriers, sys.bfm_width(), 2]
}

/// conv -> BN -> flatten -> dense -> tanh, optionally followed by a
/// quantizer.
pub(crate) fn build_encoder(
    shape: [usize; 3],
    filters: usize,
    kernel: usize,
    latent: usize,
    quant_bits: Option<u32>,
    rng: &mut impl rand::Rng,
) -> Result<Sequential, FpnetError> {
    let flat = shape[0] * shape[1] * filters;
    let mut layers = vec![
        Layer::conv2d(shape[2], filters, kernel, rng),
        Layer::batch_norm(filters),
        Layer::reshape(vec![flat]),
        Layer::dense(flat, latent, rng),
        Layer::tanh(),
    ];
    if let Some(bits) = quant_bits {
        layers.push(Layer::quantize(bits)?);
    }
    Ok(Sequential::new(layers))
}

/// dense -> reshape -> residual blocks -> conv.
pub(crate) fn build_decoder(
    shape: [usize; 3],
    latent: usize,
    blocks: usize,
    kernel: usize,
    rng: &mut impl rand::Rng,
) -> Sequential {
    let flat: usize = shape.iter().product();
    let mut layers = vec![Layer::dense(latent, flat, rng), Layer::reshape(shape.to_vec())];
    for _ in 0..blocks {
        let mut body = Vec::new();
        let mut prev = shape[2];
        for (i, &w) in RESBLOCK_WIDTHS.iter().enumerate() {
            let out = if i + 1 == RESBLOCK_WIDTHS.len() { shape[2] } else { w };
            body.push(Layer::conv2d(prev, out, kernel, rng));
            if i + 1 < RESBLOCK_WIDTHS.len() {
                body.push(Layer::leaky_relu(LEAKY_SLOPE));
            }
            prev = out;
        }
        layers.push(Layer::residual(Sequential::new(body), LEAKY_SLOPE));
    }
    layers.push(Layer::conv2d(shape[2], shape[2], kernel, rng));
    Sequential::new(layers)
}

/// Shared encoder feeding a reconstruction decoder and a positioning head.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FpnetModel {
    pub sys: SystemConfig,
    pub enc: EncoderConfig,
    pub n_classes: usize,
    pub encoder: Sequential,
    pub decoder: Sequential,
    pub head: Sequential,
}

/// Outputs for one input matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub v_hat: BfmMatrix,
    pub probs: Vec<f64>,
    pub codeword: Vec<f64>,
}

/// Batch evaluation results, in dataset order.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub sgcs: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    pub codewords: Vec<Vec<f64>>,
    /// Decoder outputs in network layout, concatenated.
    pub reconstructions: Vec<f64>,
    pub per_sample_sgcs: Vec<f64>,
}

pub const EVAL_BATCH: usize = 256;

pub fn build_model(sys: &SystemConfig, enc: &EncoderConfig, n_classes: usize, seed: u64) -> Result<FpnetModel, FpnetError> {
    sys.validate()?;
    enc.validate()?;
    if n_classes < 2 {
        return Err(FpnetError::Config("need at least two classes".into()));
    }
    let shape = bfm_shape(sys);
    let mut r = rng::stream(seed, 0x6d6f_6465);
    let encoder = build_encoder(shape, enc.conv_filters, enc.kernel, enc.codeword_len, Some(enc.quant_bits), &mut r)?;
    let decoder = build_decoder(shape, enc.codeword_len, 4, enc.kernel, &mut r);
    let head = Sequential::new(vec![Layer::dense(enc.codeword_len, n_classes, &mut r)]);
    Ok(FpnetModel { sys: sys.clone(), enc: enc.clone(), n_classes, encoder, decoder, head })
}

impl FpnetModel {
    pub fn feedback_bits(&self) -> usize {
        self.enc.feedback_bits()
    }

    pub fn param_counts(&mut self) -> (usize, usize, usize) {
        (self.encoder.param_count(), self.decoder.param_count(), self.head.param_count())
    }

    pub fn input_shape(&self) -> [usize; 3] {
        bfm_shape(&self.sys)
    }

    /// Rounds parameters to checkpoint precision.
    pub fn round_to_f32(&mut self) {
        self.encoder.round_to_f32();
        self.decoder.round_to_f32();
        self.head.round_to_f32();
    }

    pub fn infer(&self, v: &BfmMatrix) -> Result<Inference, FpnetError> {
        let shape = self.input_shape();
        let x = v.to_real();
        if v.n_tx * v.n_streams != shape[1] || v.n_subcarriers() != shape[0] {
            return Err(FpnetError::Shape(format!(
                "model expects {shape:?}, got {} tones of {}x{}",
                v.n_subcarriers(),
                v.n_tx,
                v.n_streams
            )));
        }
        let mut m = self.clone();
        let input = Tensor::stack(&[&x], &shape)?;
        let code = m.encoder.forward(&input, Mode::Eval)?;
        let recon = m.decoder.forward(&code, Mode::Eval)?;
        let probs = softmax(&m.head.forward(&code, Mode::Eval)?)?;
        Ok(Inference {
            v_hat: BfmMatrix::from_real(&recon.data, v.n_tx, v.n_streams),
            probs: probs.data,
            codeword: code.data,
        })
    }

    /// Runs the whole network over `data` in inference mode. Out-of-range
    /// labels count as misclassified.
    pub fn evaluate(&self, data: &BfmDataset) -> Result<Evaluation, FpnetError> {
        let mut m = self.clone();
        let mut out = Evaluation {
            sgcs: 0.0,
            accuracy: 0.0,
            predictions: Vec::with_capacity(data.len()),
            codewords: Vec::with_capacity(data.len()),
            reconstructions: Vec::with_capacity(data.x.len()),
            per_sample_sgcs: Vec::with_capacity(data.len()),
        };
        if data.is_empty() {
            return Err(FpnetError::EmptyData("evaluation set"));
        }
        let idx: Vec<usize> = (0..data.len()).collect();
        for chunk in idx.chunks(EVAL_BATCH) {
            let x = data.batch(chunk);
            let code = m.encoder.forward(&x, Mode::Eval)?;
            let recon = m.decoder.forward(&code, Mode::Eval)?;
            let logits = m.head.forward(&code, Mode::Eval)?;
            for (j, &i) in chunk.iter().enumerate() {
                let row = logits.sample(j);
                out.predictions.push(argmax(row));
                out.codewords.push(code.sample(j).to_vec());
                let v_hat = BfmMatrix::from_real(recon.sample(j), data.n_tx, data.n_streams);
                out.per_sample_sgcs.push(sgcs(&v_hat, &data.matrix(i))?);
            }
            out.reconstructions.extend_from_slice(&recon.data);
        }
        m.encoder.clear_cache();
        out.sgcs = mean(&out.per_sample_sgcs);
        let correct = out.predictions.iter().zip(&data.labels).filter(|(p, l)| l.zone() == Some(**p)).count();
        out.accuracy = correct as f64 / data.len() as f64;
        Ok(out)
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b })
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 }
}
