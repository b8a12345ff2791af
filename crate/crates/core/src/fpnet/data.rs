use sha2::{Digest, Sha256};

use super::FpnetError;
use crate::channel::{CsiBatch, Label};
use crate::codec::{extract_bfm, BfmMatrix};
use crate::nn::Tensor;

/// Canonical beamforming matrices in network layout `[n, tones, n_tx * n_streams, 2]`
/// with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct BfmDataset {
    pub sample_shape: [usize; 3],
    pub n_tx: usize,
    pub n_streams: usize,
    pub x: Vec<f64>,
    pub labels: Vec<Label>,
}

impl BfmDataset {
    pub fn from_batch(batch: &CsiBatch, n_streams: usize) -> Result<Self, FpnetError> {
        let sys = &batch.sys;
        let sample_shape = [sys.n_valid_subcarriers, sys.n_tx * n_streams, 2];
        let mut x = Vec::with_capacity(batch.len() * sample_shape.iter().product::<usize>());
        for s in &batch.samples {
            x.extend(extract_bfm(s, n_streams)?.to_real());
        }
        Ok(Self { sample_shape, n_tx: sys.n_tx, n_streams, x, labels: batch.samples.iter().map(|s| s.label).collect() })
    }

    pub fn from_matrices(mats: &[BfmMatrix], labels: Vec<Label>) -> Result<Self, FpnetError> {
        let first = mats.first().ok_or(FpnetError::EmptyData("no matrices"))?;
        let sample_shape = [first.n_subcarriers(), first.n_tx * first.n_streams, 2];
        let mut x = Vec::new();
        for m in mats {
            if !m.same_shape(first) {
                return Err(FpnetError::Shape("matrices differ in shape".into()));
            }
            x.extend(m.to_real());
        }
        Ok(Self { sample_shape, n_tx: first.n_tx, n_streams: first.n_streams, x, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.sample_len();
        &self.x[i * n..(i + 1) * n]
    }

    pub fn matrix(&self, i: usize) -> BfmMatrix {
        BfmMatrix::from_real(self.sample(i), self.n_tx, self.n_streams)
    }

    pub fn batch(&self, idx: &[usize]) -> Tensor {
        let rows: Vec<&[f64]> = idx.iter().map(|&i| self.sample(i)).collect();
        Tensor::stack(&rows, &self.sample_shape).expect("dataset samples share one shape")
    }

    /// Zone indices; fails on out-of-distribution entries.
    pub fn zone_labels(&self) -> Result<Vec<usize>, FpnetError> {
        self.labels
            .iter()
            .map(|l| l.zone().ok_or(FpnetError::EmptyData("out-of-distribution sample in a labelled set")))
            .collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut x = Vec::with_capacity(idx.len() * self.sample_len());
        for &i in idx {
            x.extend_from_slice(self.sample(i));
        }
        Self { x, labels: idx.iter().map(|&i| self.labels[i]).collect(), ..self.clone() }
    }

    /// Entries whose label satisfies `keep`.
    pub fn filter(&self, keep: impl Fn(Label) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.labels[i])).collect();
        self.subset(&idx)
    }

    /// SHA-256 over the values (as f64 LE) and labels.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.x {
            h.update(v.to_le_bytes());
        }
        h.update(serde_json::to_vec(&self.labels).expect("labels serialize"));
        hex::encode(h.finalize())
    }
}
