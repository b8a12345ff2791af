use super::NnError;

/// Dense row-major array. The first axis is the batch; image-like tensors
/// are `[batch, height, width, channels]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::Shape(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Values per batch entry.
    pub fn sample_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    /// Stacks equally sized samples under a new batch axis.
    pub fn stack(samples: &[&[f64]], sample_shape: &[usize]) -> Result<Self, NnError> {
        let n: usize = sample_shape.iter().product();
        let mut data = Vec::with_capacity(n * samples.len());
        for (i, s) in samples.iter().enumerate() {
            if s.len() != n {
                return Err(NnError::Shape(format!("sample {i} has {} values, expected {n}", s.len())));
            }
            data.extend_from_slice(s);
        }
        let mut shape = vec![samples.len()];
        shape.extend_from_slice(sample_shape);
        Ok(Self { shape, data })
    }

    pub fn ensure_finite(&self, context: &str) -> Result<(), NnError> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(i) => Err(NnError::NonFinite(format!("at index {i} {context}"))),
            None => Ok(()),
        }
    }
}
