use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::gemm;
use super::{NnError, Tensor};

/// Batchnorm uses batch statistics (and updates its running averages) in
/// `Train`, running statistics in `Eval`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable (or stored) array. Only the shape is serialized; values travel
/// in the checkpoint blob.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub value: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
}

impl Param {
    fn new(shape: Vec<usize>, value: Vec<f64>) -> Self {
        let n = value.len();
        Self { shape, value, grad: vec![0.0; n] }
    }

    fn uniform(shape: Vec<usize>, bound: f64, rng: &mut impl Rng) -> Self {
        let n: usize = shape.iter().product();
        let value = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        Self::new(shape, value)
    }

    fn filled(shape: Vec<usize>, x: f64) -> Self {
        let n: usize = shape.iter().product();
        Self::new(shape, vec![x; n])
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub(crate) fn ensure_grad(&mut self) {
        if self.grad.len() != self.value.len() {
            self.grad = vec![0.0; self.value.len()];
        }
    }
}

/// Mid-rise uniform quantizer with `2^bits` levels on `[-1, 1]`.
pub fn quantize_value(x: f64, bits: u32) -> f64 {
    let levels = (1u64 << bits) as f64;
    let step = 2.0 / levels;
    let idx = ((x + 1.0) / step).floor().clamp(0.0, levels - 1.0);
    (idx + 0.5) * step - 1.0
}

#[derive(Clone, Debug, Default)]
pub struct Cache {
    input: Option<Tensor>,
    output: Option<Tensor>,
    /// Batchnorm: inverse standard deviation per channel.
    aux: Vec<f64>,
    mode: Option<Mode>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    /// Same-size convolution with zero padding. Weights are
    /// `[(ky * k + kx) * in_ch + ci, out_ch]`.
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        weight: Param,
        bias: Param,
        #[serde(skip)]
        cache: Cache,
    },
    /// `y = x W + b` with `W` stored `[inputs, outputs]`. Inputs are flattened
    /// per sample.
    Dense {
        inputs: usize,
        outputs: usize,
        weight: Param,
        bias: Param,
        #[serde(skip)]
        cache: Cache,
    },
    /// Normalizes every channel (last axis) over all other axes.
    BatchNorm {
        channels: usize,
        momentum: f64,
        eps: f64,
        gamma: Param,
        beta: Param,
        running_mean: Param,
        running_var: Param,
        #[serde(skip)]
        cache: Cache,
    },
    LeakyRelu {
        slope: f64,
        #[serde(skip)]
        cache: Cache,
    },
    Tanh {
        #[serde(skip)]
        cache: Cache,
    },
    /// Uniform quantizer with straight-through gradient. Inactive quantizers
    /// pass values unchanged.
    Quantize { bits: u32, active: bool },
    /// Reshapes each sample; the batch axis is kept.
    Reshape {
        shape: Vec<usize>,
        #[serde(skip)]
        cache: Cache,
    },
    /// `y = leaky_relu(body(x) + x)`.
    Residual {
        body: Sequential,
        slope: f64,
        #[serde(skip)]
        cache: Cache,
    },
}

impl Layer {
    pub fn conv2d(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        assert!(kernel % 2 == 1, "same padding needs an odd kernel");
        let fan_in = in_ch * kernel * kernel;
        let bound = (3.0 / fan_in as f64).sqrt();
        Layer::Conv2d {
            in_ch,
            out_ch,
            kernel,
            weight: Param::uniform(vec![fan_in, out_ch], bound, rng),
            bias: Param::filled(vec![out_ch], 0.0),
            cache: Cache::default(),
        }
    }

    pub fn dense(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = (3.0 / inputs as f64).sqrt();
        Layer::Dense {
            inputs,
            outputs,
            weight: Param::uniform(vec![inputs, outputs], bound, rng),
            bias: Param::filled(vec![outputs], 0.0),
            cache: Cache::default(),
        }
    }

    pub fn batch_norm(channels: usize) -> Self {
        Layer::BatchNorm {
            channels,
            momentum: 0.9,
            eps: 1e-5,
            gamma: Param::filled(vec![channels], 1.0),
            beta: Param::filled(vec![channels], 0.0),
            running_mean: Param::filled(vec![channels], 0.0),
            running_var: Param::filled(vec![channels], 1.0),
            cache: Cache::default(),
        }
    }

    pub fn leaky_relu(slope: f64) -> Self {
        Layer::LeakyRelu { slope, cache: Cache::default() }
    }

    pub fn tanh() -> Self {
        Layer::Tanh { cache: Cache::default() }
    }

    pub fn quantize(bits: u32) -> Result<Self, NnError> {
        if !(1..=16).contains(&bits) {
            return Err(NnError::InvalidBits(bits));
        }
        Ok(Layer::Quantize { bits, active: true })
    }

    pub fn reshape(shape: Vec<usize>) -> Self {
        Layer::Reshape { shape, cache: Cache::default() }
    }

    pub fn residual(body: Sequential, slope: f64) -> Self {
        Layer::Residual { body, slope, cache: Cache::default() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv2d",
            Layer::Dense { .. } => "dense",
            Layer::BatchNorm { .. } => "batch_norm",
            Layer::LeakyRelu { .. } => "leaky_relu",
            Layer::Tanh { .. } => "tanh",
            Layer::Quantize { .. } => "quantize",
            Layer::Reshape { .. } => "reshape",
            Layer::Residual { .. } => "residual",
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        match self {
            Layer::Conv2d { in_ch, out_ch, kernel, weight, bias, cache } => {
                if x.shape.len() != 4 || x.shape[3] != *in_ch {
                    return Err(NnError::Shape(format!(
                        "conv2d expects [batch, height, width, {in_ch}], got {:?}",
                        x.shape
                    )));
                }
                let (b, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
                let rows = b * h * w;
                let cols = im2col(x, *kernel);
                let mut y = vec![0.0; rows * *out_ch];
                for r in 0..rows {
                    y[r * *out_ch..(r + 1) * *out_ch].copy_from_slice(&bias.value);
                }
                gemm(rows, *kernel * *kernel * *in_ch, *out_ch, &cols, false, &weight.value, false, 1.0, &mut y);
                cache.input = Some(x.clone());
                Ok(Tensor { shape: vec![b, h, w, *out_ch], data: y })
            }
            Layer::Dense { inputs, outputs, weight, bias, cache } => {
                let b = x.batch();
                if x.sample_len() != *inputs {
                    return Err(NnError::Shape(format!(
                        "dense expects {inputs} inputs per sample, got {} (shape {:?})",
                        x.sample_len(),
                        x.shape
                    )));
                }
                let mut y = vec![0.0; b * *outputs];
                for r in 0..b {
                    y[r * *outputs..(r + 1) * *outputs].copy_from_slice(&bias.value);
                }
                gemm(b, *inputs, *outputs, &x.data, false, &weight.value, false, 1.0, &mut y);
                cache.input = Some(x.clone());
                Ok(Tensor { shape: vec![b, *outputs], data: y })
            }
            Layer::BatchNorm { channels, momentum, eps, gamma, beta, running_mean, running_var, cache } => {
                let c = *channels;
                if x.shape.last() != Some(&c) {
                    return Err(NnError::Shape(format!("batch_norm expects {c} channels last, got {:?}", x.shape)));
                }
                let rows = x.len() / c;
                let (mean, var) = match mode {
                    Mode::Train => {
                        if rows == 0 {
                            return Err(NnError::Shape("batch_norm on an empty batch".into()));
                        }
                        let mut mean = vec![0.0; c];
                        let mut var = vec![0.0; c];
                        for row in x.data.chunks_exact(c) {
                            for j in 0..c {
                                mean[j] += row[j];
                            }
                        }
                        mean.iter_mut().for_each(|m| *m /= rows as f64);
                        for row in x.data.chunks_exact(c) {
                            for j in 0..c {
                                var[j] += (row[j] - mean[j]).powi(2);
                            }
                        }
                        var.iter_mut().for_each(|v| *v /= rows as f64);
                        for j in 0..c {
                            running_mean.value[j] = *momentum * running_mean.value[j] + (1.0 - *momentum) * mean[j];
                            running_var.value[j] = *momentum * running_var.value[j] + (1.0 - *momentum) * var[j];
                        }
                        (mean, var)
                    }
                    Mode::Eval => (running_mean.value.clone(), running_var.value.clone()),
                };
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + *eps).sqrt()).collect();
                let mut xhat = x.clone();
                let mut y = x.clone();
                for (xr, yr) in xhat.data.chunks_exact_mut(c).zip(y.data.chunks_exact_mut(c)) {
                    for j in 0..c {
                        xr[j] = (xr[j] - mean[j]) * inv_std[j];
                        yr[j] = gamma.value[j] * xr[j] + beta.value[j];
                    }
                }
                cache.output = Some(xhat);
                cache.aux = inv_std;
                cache.mode = Some(mode);
                Ok(y)
            }
            Layer::LeakyRelu { slope, cache } => {
                let s = *slope;
                let y = Tensor { shape: x.shape.clone(), data: x.data.iter().map(|&v| if v > 0.0 { v } else { s * v }).collect() };
                cache.input = Some(x.clone());
                Ok(y)
            }
            Layer::Tanh { cache } => {
                let y = Tensor { shape: x.shape.clone(), data: x.data.iter().map(|v| v.tanh()).collect() };
                cache.output = Some(y.clone());
                Ok(y)
            }
            Layer::Quantize { bits, active } => {
                if !*active {
                    return Ok(x.clone());
                }
                let b = *bits;
                Ok(Tensor { shape: x.shape.clone(), data: x.data.iter().map(|&v| quantize_value(v, b)).collect() })
            }
            Layer::Reshape { shape, cache } => {
                let n: usize = shape.iter().product();
                if n != x.sample_len() {
                    return Err(NnError::Shape(format!("cannot reshape {:?} to {shape:?} per sample", x.shape)));
                }
                let mut out_shape = vec![x.batch()];
                out_shape.extend_from_slice(shape);
                cache.input = Some(Tensor { shape: x.shape.clone(), data: Vec::new() });
                Ok(Tensor { shape: out_shape, data: x.data.clone() })
            }
            Layer::Residual { body, slope, cache } => {
                let inner = body.forward(x, mode)?;
                if inner.shape != x.shape {
                    return Err(NnError::Shape(format!(
                        "residual body maps {:?} to {:?}",
                        x.shape, inner.shape
                    )));
                }
                let s = *slope;
                let sum: Vec<f64> = inner.data.iter().zip(&x.data).map(|(a, b)| a + b).collect();
                let y = Tensor { shape: x.shape.clone(), data: sum.iter().map(|&v| if v > 0.0 { v } else { s * v }).collect() };
                cache.input = Some(Tensor { shape: x.shape.clone(), data: sum });
                Ok(y)
            }
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let missing = |name: &str| NnError::Shape(format!("{name}: backward before forward"));
        match self {
            Layer::Conv2d { in_ch, out_ch, kernel, weight, bias, cache } => {
                let x = cache.input.as_ref().ok_or_else(|| missing("conv2d"))?;
                let (b, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
                let rows = b * h * w;
                check_grad_shape(dy, &[b, h, w, *out_ch])?;
                let kk = *kernel * *kernel * *in_ch;
                let cols = im2col(x, *kernel);
                weight.ensure_grad();
                bias.ensure_grad();
                gemm(kk, rows, *out_ch, &cols, true, &dy.data, false, 1.0, &mut weight.grad);
                for r in dy.data.chunks_exact(*out_ch) {
                    for (g, v) in bias.grad.iter_mut().zip(r) {
                        *g += v;
                    }
                }
                let mut dcols = vec![0.0; rows * kk];
                gemm(rows, *out_ch, kk, &dy.data, false, &weight.value, true, 0.0, &mut dcols);
                Ok(col2im(&dcols, &x.shape, *kernel))
            }
            Layer::Dense { inputs, outputs, weight, bias, cache } => {
                let x = cache.input.as_ref().ok_or_else(|| missing("dense"))?;
                let b = x.batch();
                check_grad_shape(dy, &[b, *outputs])?;
                weight.ensure_grad();
                bias.ensure_grad();
                gemm(*inputs, b, *outputs, &x.data, true, &dy.data, false, 1.0, &mut weight.grad);
                for r in dy.data.chunks_exact(*outputs) {
                    for (g, v) in bias.grad.iter_mut().zip(r) {
                        *g += v;
                    }
                }
                let mut dx = vec![0.0; b * *inputs];
                gemm(b, *outputs, *inputs, &dy.data, false, &weight.value, true, 0.0, &mut dx);
                Ok(Tensor { shape: x.shape.clone(), data: dx })
            }
            Layer::BatchNorm { channels, gamma, beta, cache, .. } => {
                let c = *channels;
                let xhat = cache.output.as_ref().ok_or_else(|| missing("batch_norm"))?;
                check_grad_shape(dy, &xhat.shape)?;
                let rows = xhat.len() / c;
                gamma.ensure_grad();
                beta.ensure_grad();
                let mut sum_dy = vec![0.0; c];
                let mut sum_dy_xhat = vec![0.0; c];
                for (xr, dr) in xhat.data.chunks_exact(c).zip(dy.data.chunks_exact(c)) {
                    for j in 0..c {
                        sum_dy[j] += dr[j];
                        sum_dy_xhat[j] += dr[j] * xr[j];
                    }
                }
                for j in 0..c {
                    gamma.grad[j] += sum_dy_xhat[j];
                    beta.grad[j] += sum_dy[j];
                }
                let inv_std = &cache.aux;
                let mut dx = dy.clone();
                let n = rows as f64;
                for (xr, dr) in xhat.data.chunks_exact(c).zip(dx.data.chunks_exact_mut(c)) {
                    for j in 0..c {
                        let g = gamma.value[j] * inv_std[j];
                        dr[j] = match cache.mode {
                            Some(Mode::Train) => g * (dr[j] - sum_dy[j] / n - xr[j] * sum_dy_xhat[j] / n),
                            _ => g * dr[j],
                        };
                    }
                }
                Ok(dx)
            }
            Layer::LeakyRelu { slope, cache } => {
                let x = cache.input.as_ref().ok_or_else(|| missing("leaky_relu"))?;
                check_grad_shape(dy, &x.shape)?;
                let s = *slope;
                let data = dy.data.iter().zip(&x.data).map(|(g, &v)| if v > 0.0 { *g } else { s * g }).collect();
                Ok(Tensor { shape: dy.shape.clone(), data })
            }
            Layer::Tanh { cache } => {
                let y = cache.output.as_ref().ok_or_else(|| missing("tanh"))?;
                check_grad_shape(dy, &y.shape)?;
                let data = dy.data.iter().zip(&y.data).map(|(g, v)| g * (1.0 - v * v)).collect();
                Ok(Tensor { shape: dy.shape.clone(), data })
            }
            Layer::Quantize { .. } => Ok(dy.clone()),
            Layer::Reshape { cache, .. } => {
                let x = cache.input.as_ref().ok_or_else(|| missing("reshape"))?;
                Ok(Tensor { shape: x.shape.clone(), data: dy.data.clone() })
            }
            Layer::Residual { body, slope, cache } => {
                let sum = cache.input.as_ref().ok_or_else(|| missing("residual"))?;
                check_grad_shape(dy, &sum.shape)?;
                let s = *slope;
                let ds = Tensor {
                    shape: dy.shape.clone(),
                    data: dy.data.iter().zip(&sum.data).map(|(g, &v)| if v > 0.0 { *g } else { s * g }).collect(),
                };
                let mut dx = body.backward(&ds)?;
                for (a, b) in dx.data.iter_mut().zip(&ds.data) {
                    *a += b;
                }
                Ok(dx)
            }
        }
    }

    pub fn collect_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        match self {
            Layer::Conv2d { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                out.push(weight);
                out.push(bias);
            }
            Layer::BatchNorm { gamma, beta, .. } => {
                out.push(gamma);
                out.push(beta);
            }
            Layer::Residual { body, .. } => body.collect_params(out),
            _ => {}
        }
    }

    fn collect_state<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        match self {
            Layer::BatchNorm { gamma, beta, running_mean, running_var, .. } => {
                out.push(gamma);
                out.push(beta);
                out.push(running_mean);
                out.push(running_var);
            }
            Layer::Residual { body, .. } => body.collect_state(out),
            other => other.collect_params(out),
        }
    }

    fn clear_cache(&mut self) {
        match self {
            Layer::Conv2d { cache, .. }
            | Layer::Dense { cache, .. }
            | Layer::BatchNorm { cache, .. }
            | Layer::LeakyRelu { cache, .. }
            | Layer::Tanh { cache }
            | Layer::Reshape { cache, .. } => *cache = Cache::default(),
            Layer::Residual { body, cache, .. } => {
                *cache = Cache::default();
                body.clear_cache();
            }
            Layer::Quantize { .. } => {}
        }
    }
}

fn check_grad_shape(dy: &Tensor, expected: &[usize]) -> Result<(), NnError> {
    if dy.shape != expected {
        return Err(NnError::Shape(format!("gradient shape {:?}, expected {expected:?}", dy.shape)));
    }
    Ok(())
}

/// Patch matrix `[batch * h * w, k * k * c]` with zero padding.
fn im2col(x: &Tensor, k: usize) -> Vec<f64> {
    let (b, h, w, c) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let p = (k / 2) as isize;
    let width = k * k * c;
    let mut cols = vec![0.0; b * h * w * width];
    for n in 0..b {
        for i in 0..h {
            for j in 0..w {
                let row = ((n * h + i) * w + j) * width;
                for ky in 0..k {
                    let yy = i as isize + ky as isize - p;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let xx = j as isize + kx as isize - p;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let src = ((n * h + yy as usize) * w + xx as usize) * c;
                        let dst = row + (ky * k + kx) * c;
                        cols[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], shape: &[usize], k: usize) -> Tensor {
    let (b, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
    let p = (k / 2) as isize;
    let width = k * k * c;
    let mut dx = vec![0.0; b * h * w * c];
    for n in 0..b {
        for i in 0..h {
            for j in 0..w {
                let row = ((n * h + i) * w + j) * width;
                for ky in 0..k {
                    let yy = i as isize + ky as isize - p;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let xx = j as isize + kx as isize - p;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let dst = ((n * h + yy as usize) * w + xx as usize) * c;
                        let src = row + (ky * k + kx) * c;
                        for ch in 0..c {
                            dx[dst + ch] += cols[src + ch];
                        }
                    }
                }
            }
        }
    }
    Tensor { shape: shape.to_vec(), data: dx }
}

/// Layers applied in order.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            cur = layer.forward(&cur, mode)?;
            cur.ensure_finite(&format!("after layer {i} ({})", layer.name()))?;
        }
        Ok(cur)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let mut cur = dy.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    pub fn collect_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        for l in &mut self.layers {
            l.collect_params(out);
        }
    }

    /// Trainable parameters plus stored statistics, in declaration order.
    pub fn collect_state<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        for l in &mut self.layers {
            l.collect_state(out);
        }
    }

    pub fn params(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        self.collect_params(&mut v);
        v
    }

    pub fn state(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        self.collect_state(&mut v);
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.params() {
            p.grad.clear();
            p.grad.resize(p.value.len(), 0.0);
        }
    }

    pub fn param_count(&mut self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// Drops activations kept for the backward pass.
    pub fn clear_cache(&mut self) {
        for l in &mut self.layers {
            l.clear_cache();
        }
    }

    /// Rounds every stored value to single precision, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for p in self.state() {
            p.value.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    pub fn set_quantizer(&mut self, on: bool) {
        for l in &mut self.layers {
            match l {
                Layer::Quantize { active, .. } => *active = on,
                Layer::Residual { body, .. } => body.set_quantizer(on),
                _ => {}
            }
        }
    }
}
