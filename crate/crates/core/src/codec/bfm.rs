use std::cmp::Ordering;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::CodecError;
use crate::channel::CsiSample;

/// Full SVD of one channel matrix, singular values descending.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: DMatrix<Complex64>,
    pub sigma: Vec<f64>,
    pub v_full: DMatrix<Complex64>,
}

/// Beamforming feedback matrices, one `n_tx x n_streams` matrix per tone.
///
/// Storage is column-major per tone: `v[(k * n_streams + col) * n_tx + row]`,
/// so each beamforming column is contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct BfmMatrix {
    pub n_tx: usize,
    pub n_streams: usize,
    pub v: Vec<Complex64>,
}

impl BfmMatrix {
    pub fn zeros(n_subcarriers: usize, n_tx: usize, n_streams: usize) -> Self {
        Self { n_tx, n_streams, v: vec![Complex64::new(0.0, 0.0); n_subcarriers * n_tx * n_streams] }
    }

    pub fn n_subcarriers(&self) -> usize {
        self.v.len() / (self.n_tx * self.n_streams)
    }

    pub fn column(&self, k: usize, col: usize) -> &[Complex64] {
        let start = (k * self.n_streams + col) * self.n_tx;
        &self.v[start..start + self.n_tx]
    }

    pub fn column_mut(&mut self, k: usize, col: usize) -> &mut [Complex64] {
        let start = (k * self.n_streams + col) * self.n_tx;
        &mut self.v[start..start + self.n_tx]
    }

    pub fn get(&self, k: usize, row: usize, col: usize) -> Complex64 {
        self.v[(k * self.n_streams + col) * self.n_tx + row]
    }

    pub fn set(&mut self, k: usize, row: usize, col: usize, value: Complex64) {
        self.v[(k * self.n_streams + col) * self.n_tx + row] = value;
    }

    pub fn same_shape(&self, other: &BfmMatrix) -> bool {
        self.n_tx == other.n_tx && self.n_streams == other.n_streams && self.v.len() == other.v.len()
    }

    /// Fixes the per-column phase so the last row is real and non-negative.
    pub fn canonicalize(&mut self) {
        for k in 0..self.n_subcarriers() {
            for c in 0..self.n_streams {
                canonicalize_column(self.column_mut(k, c));
            }
        }
    }

    pub fn canonical(&self) -> BfmMatrix {
        let mut out = self.clone();
        out.canonicalize();
        out
    }

    /// Real-valued view `[subcarrier][col * n_tx + row][re, im]`, the layout
    /// the networks consume.
    pub fn to_real(&self) -> Vec<f64> {
        let w = self.n_tx * self.n_streams;
        let mut out = vec![0.0; self.n_subcarriers() * w * 2];
        for k in 0..self.n_subcarriers() {
            for c in 0..self.n_streams {
                for r in 0..self.n_tx {
                    let z = self.get(k, r, c);
                    let base = (k * w + c * self.n_tx + r) * 2;
                    out[base] = z.re;
                    out[base + 1] = z.im;
                }
            }
        }
        out
    }

    pub fn from_real(data: &[f64], n_tx: usize, n_streams: usize) -> Self {
        let w = n_tx * n_streams;
        let n_sub = data.len() / (w * 2);
        let mut out = Self::zeros(n_sub, n_tx, n_streams);
        for k in 0..n_sub {
            for c in 0..n_streams {
                for r in 0..n_tx {
                    let base = (k * w + c * n_tx + r) * 2;
                    out.set(k, r, c, Complex64::new(data[base], data[base + 1]));
                }
            }
        }
        out
    }

    /// Keeps every `group`-th tone.
    pub fn decimate(&self, group: usize) -> BfmMatrix {
        let group = group.max(1);
        let per = self.n_tx * self.n_streams;
        let v = self.v.chunks(per).step_by(group).flatten().copied().collect();
        BfmMatrix { n_tx: self.n_tx, n_streams: self.n_streams, v }
    }

    /// Inverse of [`decimate`](Self::decimate): each fed-back tone is reused
    /// for its whole group, truncated to `n_subcarriers` tones.
    pub fn expand_groups(&self, group: usize, n_subcarriers: usize) -> BfmMatrix {
        let group = group.max(1);
        let per = self.n_tx * self.n_streams;
        let v = (0..n_subcarriers)
            .flat_map(|k| {
                let src = (k / group).min(self.n_subcarriers().saturating_sub(1));
                self.v[src * per..(src + 1) * per].iter().copied()
            })
            .collect();
        BfmMatrix { n_tx: self.n_tx, n_streams: self.n_streams, v }
    }
}

pub(crate) fn canonicalize_column(col: &mut [Complex64]) {
    // The reference is the last entry; when it vanishes the phase is free and
    // the last non-negligible entry is used instead, for a deterministic form.
    let Some(idx) = col.iter().rposition(|z| z.norm() > 1e-12) else { return };
    let reference = col[idx];
    let rot = reference.conj() / reference.norm();
    for z in col.iter_mut() {
        *z *= rot;
    }
    col[idx] = Complex64::new(col[idx].re.max(0.0), 0.0);
}

/// Full SVD `H = U diag(sigma) V^H` with unitary `U` (`n_rx x n_rx`) and
/// `V` (`n_tx x n_tx`). The right null space is completed by Gram-Schmidt
/// over the standard basis.
pub fn svd_full(h: &DMatrix<Complex64>) -> SvdResult {
    let (n_rx, n_tx) = h.shape();
    let svd = h.clone().svd(true, true);
    let u_thin = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap_or(Ordering::Equal));

    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v_cols: Vec<Vec<Complex64>> =
        order.iter().map(|&i| (0..n_tx).map(|r| vt[(i, r)].conj()).collect()).collect();
    let mut u_cols: Vec<Vec<Complex64>> = order.iter().map(|&i| u_thin.column(i).iter().copied().collect()).collect();
    complete_basis(&mut v_cols, n_tx);
    complete_basis(&mut u_cols, n_rx);

    SvdResult {
        u: DMatrix::from_fn(n_rx, n_rx, |r, c| u_cols[c][r]),
        sigma,
        v_full: DMatrix::from_fn(n_tx, n_tx, |r, c| v_cols[c][r]),
    }
}

fn complete_basis(cols: &mut Vec<Vec<Complex64>>, n: usize) {
    let mut e = 0;
    while cols.len() < n && e < n {
        let mut cand = vec![Complex64::new(0.0, 0.0); n];
        cand[e] = Complex64::new(1.0, 0.0);
        for _ in 0..2 {
            for c in cols.iter() {
                let proj: Complex64 = c.iter().zip(&cand).map(|(a, b)| a.conj() * b).sum();
                for (x, y) in cand.iter_mut().zip(c) {
                    *x -= proj * y;
                }
            }
        }
        let norm = cand.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(cand.into_iter().map(|z| z / norm).collect());
        }
        e += 1;
    }
}

/// Relative gap below which two singular values count as equal.
const DEGENERATE_GAP: f64 = 1e-9;

/// Per tone, the first `n_streams` right singular vectors in descending
/// singular-value order, each with its last entry real and non-negative.
///
/// Columns whose singular values tie (within `1e-9` relative) are ordered by
/// lexicographic comparison of their canonical forms.
pub fn extract_bfm(sample: &CsiSample, n_streams: usize) -> Result<BfmMatrix, CodecError> {
    let (n_rx, n_tx) = (sample.n_rx, sample.n_tx);
    if n_streams == 0 || n_streams > n_rx.min(n_tx) {
        return Err(CodecError::Geometry(format!("n_streams={n_streams} with a {n_rx}x{n_tx} channel")));
    }
    let n_sub = sample.n_subcarriers();
    let mut out = BfmMatrix::zeros(n_sub, n_tx, n_streams);
    for k in 0..n_sub {
        let svd = svd_full(&sample.matrix(k));
        let scale = svd.sigma[0].max(f64::MIN_POSITIVE);
        if svd.sigma[n_streams - 1] <= 1e-12 * scale.max(1.0) {
            return Err(CodecError::DegenerateChannel { subcarrier: k });
        }
        let mut cols: Vec<(f64, Vec<Complex64>)> = (0..svd.sigma.len())
            .map(|c| {
                let mut col: Vec<Complex64> = svd.v_full.column(c).iter().copied().collect();
                canonicalize_column(&mut col);
                (svd.sigma[c], col)
            })
            .collect();
        cols.sort_by(|a, b| {
            if (a.0 - b.0).abs() <= DEGENERATE_GAP * scale {
                lex_cmp(&a.1, &b.1)
            } else {
                b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal)
            }
        });
        for (c, (_, col)) in cols.iter().take(n_streams).enumerate() {
            out.column_mut(k, c).copy_from_slice(col);
        }
    }
    Ok(out)
}

fn lex_cmp(a: &[Complex64], b: &[Complex64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = y.re.partial_cmp(&x.re).unwrap_or(Ordering::Equal).then(y.im.partial_cmp(&x.im).unwrap_or(Ordering::Equal));
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}
