//! Givens-rotation parameterization of beamforming matrices.
//!
//! A canonical `n_tx x n_streams` matrix with orthonormal columns is written
//! as
//!
//! ```text
//! V = prod_{i=1}^{min(Ns, Nt-1)} [ D_i(phi_{i..Nt-1, i}) prod_{l=i+1}^{Nt} G_{l,i}^T(psi_{l,i}) ] I_{Nt x Ns}
//! ```
//!
//! where `D_i` puts phases `e^{j phi_{l,i}}` on diagonal entries `i..Nt-1`
//! and `G_{l,i}` is a real plane rotation between rows `i` and `l`. The
//! rotation matrices are only ever applied in place; they are never stored.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{BfmMatrix, CodecError};

/// Largest transmit antenna count with a defined angle table.
pub const MAX_TX: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AngleKind {
    Phi,
    Psi,
}

/// One entry of the angle ordering; `row` and `col` are 1-based, matching the
/// usual `phi_{l,i}` / `psi_{l,i}` subscripts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngleId {
    pub kind: AngleKind,
    pub row: usize,
    pub col: usize,
}

impl std::fmt::Display for AngleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self.kind {
            AngleKind::Phi => "phi",
            AngleKind::Psi => "psi",
        };
        write!(f, "{name}{}{}", self.row, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngleCount {
    pub n_phi: usize,
    pub n_psi: usize,
    pub bits_type0: usize,
    pub bits_type1: usize,
}

/// Angles and feedback bits per tone for an `n_tx x n_streams` matrix.
pub fn angle_count(n_tx: usize, n_streams: usize) -> Result<AngleCount, CodecError> {
    if !(1 <= n_streams && n_streams <= n_tx && n_tx <= MAX_TX) {
        return Err(CodecError::Geometry(format!(
            "unsupported {n_tx}x{n_streams} feedback matrix (need 1 <= Ns <= Nt <= {MAX_TX})"
        )));
    }
    let n: usize = (1..=n_streams.min(n_tx - 1)).map(|i| n_tx - i).sum();
    Ok(AngleCount { n_phi: n, n_psi: n, bits_type0: n * (7 + 5), bits_type1: n * (9 + 7) })
}

/// Canonical angle order: per column `i`, its phases then its rotations.
pub fn angle_order(n_tx: usize, n_streams: usize) -> Vec<AngleId> {
    let mut out = Vec::new();
    for i in 1..=n_streams.min(n_tx.saturating_sub(1)) {
        for l in i..n_tx {
            out.push(AngleId { kind: AngleKind::Phi, row: l, col: i });
        }
        for l in i + 1..=n_tx {
            out.push(AngleId { kind: AngleKind::Psi, row: l, col: i });
        }
    }
    out
}

/// Angles for every tone, stored in [`angle_order`] per tone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleSet {
    pub n_tx: usize,
    pub n_streams: usize,
    /// `phi[k * n_phi + j]`, in `[0, 2 pi)`.
    pub phi: Vec<f64>,
    /// `psi[k * n_psi + j]`, in `[0, pi / 2]`.
    pub psi: Vec<f64>,
}

impl AngleSet {
    pub fn empty(n_tx: usize, n_streams: usize) -> Self {
        Self { n_tx, n_streams, phi: Vec::new(), psi: Vec::new() }
    }

    pub fn n_subcarriers(&self) -> usize {
        let n = angle_count(self.n_tx, self.n_streams).map(|c| c.n_phi).unwrap_or(0);
        if n == 0 { 0 } else { self.phi.len() / n }
    }

    pub fn order(&self) -> Vec<AngleId> {
        angle_order(self.n_tx, self.n_streams)
    }

    /// Angles of tone `k` in transmission order.
    pub fn tone(&self, k: usize) -> Vec<(AngleId, f64)> {
        let count = angle_count(self.n_tx, self.n_streams).expect("valid geometry");
        let (mut p, mut s) = (k * count.n_phi, k * count.n_psi);
        self.order()
            .into_iter()
            .map(|id| {
                let v = match id.kind {
                    AngleKind::Phi => {
                        p += 1;
                        self.phi[p - 1]
                    }
                    AngleKind::Psi => {
                        s += 1;
                        self.psi[s - 1]
                    }
                };
                (id, v)
            })
            .collect()
    }
}

const CANONICAL_TOL: f64 = 1e-9;

fn arg_or_zero(z: Complex64) -> f64 {
    if z.norm() < 1e-12 {
        0.0
    } else {
        z.arg().rem_euclid(TAU) % TAU
    }
}

/// Recovers `(phi, psi)` for every tone of a canonical matrix.
pub fn givens_decompose(v: &BfmMatrix) -> Result<AngleSet, CodecError> {
    let (nt, ns) = (v.n_tx, v.n_streams);
    let count = angle_count(nt, ns)?;
    let n_sub = v.n_subcarriers();
    let mut out = AngleSet {
        n_tx: nt,
        n_streams: ns,
        phi: Vec::with_capacity(n_sub * count.n_phi),
        psi: Vec::with_capacity(n_sub * count.n_psi),
    };
    // Working copy, column-major: w[c * nt + r].
    let mut w = vec![Complex64::new(0.0, 0.0); nt * ns];
    for k in 0..n_sub {
        for c in 0..ns {
            let col = v.column(k, c);
            let last = col[nt - 1];
            if last.im.abs() > CANONICAL_TOL || last.re < -CANONICAL_TOL {
                return Err(CodecError::NotCanonical { subcarrier: k, column: c });
            }
            w[c * nt..(c + 1) * nt].copy_from_slice(col);
        }
        for i in 0..ns.min(nt - 1) {
            for l in i..nt - 1 {
                let phi = arg_or_zero(w[i * nt + l]);
                out.phi.push(phi);
                let rot = Complex64::from_polar(1.0, -phi);
                for c in 0..ns {
                    w[c * nt + l] *= rot;
                }
            }
            for l in i + 1..nt {
                let a = w[i * nt + i].re;
                let b = w[i * nt + l].re;
                let psi = b.atan2(a).clamp(0.0, FRAC_PI_2);
                out.psi.push(psi);
                let (s, cs) = psi.sin_cos();
                for c in 0..ns {
                    let (ri, rl) = (w[c * nt + i], w[c * nt + l]);
                    w[c * nt + i] = ri * cs + rl * s;
                    w[c * nt + l] = -ri * s + rl * cs;
                }
            }
        }
    }
    Ok(out)
}

/// Rebuilds the canonical matrices from their angles.
pub fn givens_reconstruct(angles: &AngleSet, n_tx: usize, n_streams: usize) -> Result<BfmMatrix, CodecError> {
    let count = angle_count(n_tx, n_streams)?;
    if angles.n_tx != n_tx || angles.n_streams != n_streams {
        return Err(CodecError::Geometry(format!(
            "angle set is {}x{}, asked for {n_tx}x{n_streams}",
            angles.n_tx, angles.n_streams
        )));
    }
    let n_sub = if count.n_phi == 0 { 0 } else { angles.phi.len() / count.n_phi };
    if angles.phi.len() != n_sub * count.n_phi || angles.psi.len() != n_sub * count.n_psi {
        return Err(CodecError::Framing(format!(
            "{} phi / {} psi values do not fill whole tones of {} + {}",
            angles.phi.len(),
            angles.psi.len(),
            count.n_phi,
            count.n_psi
        )));
    }
    if let Some(bad) = angles.phi.iter().find(|x| !(0.0..TAU + 1e-12).contains(*x)) {
        return Err(CodecError::AngleOutOfRange { kind: AngleKind::Phi, value: *bad });
    }
    if let Some(bad) = angles.psi.iter().find(|x| !(0.0..=FRAC_PI_2 + 1e-12).contains(*x)) {
        return Err(CodecError::AngleOutOfRange { kind: AngleKind::Psi, value: *bad });
    }

    let (nt, ns) = (n_tx, n_streams);
    let imax = ns.min(nt - 1);
    let mut out = BfmMatrix::zeros(n_sub, nt, ns);
    let mut w = vec![Complex64::new(0.0, 0.0); nt * ns];
    for k in 0..n_sub {
        w.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for c in 0..ns {
            w[c * nt + c] = Complex64::new(1.0, 0.0);
        }
        let phis = &angles.phi[k * count.n_phi..(k + 1) * count.n_phi];
        let psis = &angles.psi[k * count.n_psi..(k + 1) * count.n_psi];
        // Offsets of column i's angles within the tone.
        let offset = |i: usize| -> usize { (0..i).map(|j| nt - 1 - j).sum() };
        for i in (0..imax).rev() {
            let base = offset(i);
            for l in (i + 1..nt).rev() {
                let psi = psis[base + (l - i - 1)];
                let (s, cs) = psi.sin_cos();
                for c in 0..ns {
                    let (ri, rl) = (w[c * nt + i], w[c * nt + l]);
                    w[c * nt + i] = ri * cs - rl * s;
                    w[c * nt + l] = ri * s + rl * cs;
                }
            }
            for l in i..nt - 1 {
                let rot = Complex64::from_polar(1.0, phis[base + (l - i)]);
                for c in 0..ns {
                    w[c * nt + l] *= rot;
                }
            }
        }
        for c in 0..ns {
            out.column_mut(k, c).copy_from_slice(&w[c * nt..(c + 1) * nt]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::sgcs;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single(n_tx: usize, col: &[Complex64]) -> BfmMatrix {
        BfmMatrix { n_tx, n_streams: 1, v: col.to_vec() }
    }

    #[test]
    fn table_rows() {
        let row = |t, s| {
            let a = angle_count(t, s).unwrap();
            (a.n_phi, a.n_psi, a.bits_type0, a.bits_type1)
        };
        assert_eq!(row(2, 1), (1, 1, 12, 16));
        assert_eq!(row(2, 2), (1, 1, 12, 16));
        assert_eq!(row(3, 1), (2, 2, 24, 32));
        assert_eq!(row(3, 2), (3, 3, 36, 48));
        assert_eq!(row(3, 3), (3, 3, 36, 48));
        assert!(angle_count(9, 1).is_err());
        assert!(angle_count(2, 3).is_err());
        assert!(angle_count(2, 0).is_err());
    }

    #[test]
    fn order_matches_table() {
        let names = |t, s| angle_order(t, s).iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",");
        assert_eq!(names(2, 1), "phi11,psi21");
        assert_eq!(names(3, 1), "phi11,phi21,psi21,psi31");
        assert_eq!(names(3, 2), "phi11,phi21,psi21,psi31,phi22,psi32");
    }

    #[test]
    fn identity_column() {
        let a = givens_decompose(&single(2, &[c(1., 0.), c(0., 0.)])).unwrap();
        assert_eq!((a.phi[0], a.psi[0]), (0.0, 0.0));
    }

    #[test]
    fn second_basis_vector_tie_break() {
        let a = givens_decompose(&single(2, &[c(0., 0.), c(1., 0.)])).unwrap();
        assert_eq!(a.phi[0], 0.0);
        assert!((a.psi[0] - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn known_angles_two_by_one() {
        let v = [Complex64::from_polar((PI / 6.0).cos(), PI / 3.0), c((PI / 6.0).sin(), 0.0)];
        let a = givens_decompose(&single(2, &v)).unwrap();
        assert!((a.phi[0] - PI / 3.0).abs() < 1e-12);
        assert!((a.psi[0] - PI / 6.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_angles_give_rectangular_identity() {
        let angles = AngleSet { n_tx: 3, n_streams: 2, phi: vec![0.0; 3], psi: vec![0.0; 3] };
        let v = givens_reconstruct(&angles, 3, 2).unwrap();
        let expect = [c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.), c(1., 0.), c(0., 0.)];
        for (x, y) in v.v.iter().zip(expect) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    /// Dense `Nt x Nt` matrices from the closed-form definitions, multiplied
    /// out explicitly.
    fn hand_product(nt: usize, ns: usize, phis: &[f64], psis: &[f64]) -> Vec<Vec<Complex64>> {
        let eye = |n: usize| -> Vec<Vec<Complex64>> {
            (0..n).map(|r| (0..n).map(|c2| if r == c2 { c(1., 0.) } else { c(0., 0.) }).collect()).collect()
        };
        let mul = |a: &Vec<Vec<Complex64>>, b: &Vec<Vec<Complex64>>| -> Vec<Vec<Complex64>> {
            let n = a.len();
            (0..n).map(|r| (0..b[0].len()).map(|cc| (0..n).map(|j| a[r][j] * b[j][cc]).sum()).collect()).collect()
        };
        let mut acc = eye(nt);
        let (mut p, mut s) = (0, 0);
        for i in 0..ns.min(nt - 1) {
            let mut d = eye(nt);
            for l in i..nt - 1 {
                d[l][l] = Complex64::from_polar(1.0, phis[p]);
                p += 1;
            }
            acc = mul(&acc, &d);
            for l in i + 1..nt {
                let mut gt = eye(nt);
                let (sn, cs) = psis[s].sin_cos();
                s += 1;
                // Transpose of G_{l,i}: G has +sin at (i,l) and -sin at (l,i).
                gt[i][i] = c(cs, 0.);
                gt[l][l] = c(cs, 0.);
                gt[i][l] = c(-sn, 0.);
                gt[l][i] = c(sn, 0.);
                acc = mul(&acc, &gt);
            }
        }
        (0..nt).map(|r| (0..ns).map(|cc| acc[r][cc]).collect()).collect()
    }

    #[test]
    fn three_by_one_matches_matrix_product() {
        let phis = [PI / 3.0, PI / 5.0];
        let psis = [PI / 6.0, PI / 7.0];
        let angles = AngleSet { n_tx: 3, n_streams: 1, phi: phis.to_vec(), psi: psis.to_vec() };
        let v = givens_reconstruct(&angles, 3, 1).unwrap();
        let expect = hand_product(3, 1, &phis, &psis);
        for r in 0..3 {
            assert!((v.get(0, r, 0) - expect[r][0]).norm() < 1e-12, "row {r}");
        }
        // Closed form of the same column.
        let (s6, c6) = (PI / 6.0).sin_cos();
        let (s7, c7) = (PI / 7.0).sin_cos();
        assert!((v.get(0, 0, 0) - Complex64::from_polar(c6 * c7, PI / 3.0)).norm() < 1e-12);
        assert!((v.get(0, 1, 0) - Complex64::from_polar(s6 * c7, PI / 5.0)).norm() < 1e-12);
        assert!((v.get(0, 2, 0) - c(s7, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn three_by_two_matches_matrix_product() {
        let phis = [0.4, 2.0, 5.5];
        let psis = [0.3, 1.1, 0.7];
        let angles = AngleSet { n_tx: 3, n_streams: 2, phi: phis.to_vec(), psi: psis.to_vec() };
        let v = givens_reconstruct(&angles, 3, 2).unwrap();
        let expect = hand_product(3, 2, &phis, &psis);
        for r in 0..3 {
            for cc in 0..2 {
                assert!((v.get(0, r, cc) - expect[r][cc]).norm() < 1e-12);
            }
        }
        let back = givens_decompose(&v).unwrap();
        for (a, b) in back.phi.iter().zip(phis) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in back.psi.iter().zip(psis) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_non_canonical_input() {
        let v = single(2, &[c(0.6, 0.), c(0., 0.8)]);
        assert!(matches!(givens_decompose(&v), Err(CodecError::NotCanonical { subcarrier: 0, column: 0 })));
    }

    #[test]
    fn rejects_out_of_range_angles() {
        let angles = AngleSet { n_tx: 2, n_streams: 1, phi: vec![0.1], psi: vec![2.0] };
        assert!(matches!(givens_reconstruct(&angles, 2, 1), Err(CodecError::AngleOutOfRange { kind: AngleKind::Psi, .. })));
        let angles = AngleSet { n_tx: 2, n_streams: 1, phi: vec![-0.1], psi: vec![0.2] };
        assert!(givens_reconstruct(&angles, 2, 1).is_err());
    }

    #[test]
    fn round_trip_random_unit_vectors() {
        use rand::Rng;
        let mut rng = crate::rng::stream(42, 0);
        for (nt, trials) in [(2, 200), (3, 1000), (4, 200)] {
            for _ in 0..trials {
                let mut col: Vec<Complex64> = (0..nt).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
                let n = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                col.iter_mut().for_each(|z| *z /= n);
                let v = single(nt, &col).canonical();
                let back = givens_reconstruct(&givens_decompose(&v).unwrap(), nt, 1).unwrap();
                for (a, b) in back.v.iter().zip(&v.v) {
                    assert!((a - b).norm() < 1e-6);
                }
                assert!(sgcs(&back, &v).unwrap() > 1.0 - 1e-10);
            }
        }
    }
}
