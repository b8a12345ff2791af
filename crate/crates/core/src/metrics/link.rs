use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use super::MetricsError;
use crate::channel::CsiSample;
use crate::codec::BfmMatrix;
use crate::rng;

/// Lowest reported EVM; keeps noiseless results finite.
pub const EVM_FLOOR_DB: f64 = -80.0;

/// Error vector magnitude (dB) of a precoded QPSK link.
///
/// Each tone sends `n_symbols` vectors of unit-power QPSK symbols, one per
/// stream, precoded by the column-normalized `v_hat` with total transmit
/// power 1, through the tone's channel plus complex white noise of variance
/// `10^(-snr_db/10)` per receive antenna. The receiver knows the effective
/// channel `H v_hat` and equalizes by least squares. `snr_db = inf` is
/// noiseless.
pub fn simulate_link_evm(
    sample: &CsiSample,
    v_hat: &BfmMatrix,
    snr_db: f64,
    n_symbols: usize,
    seed: u64,
) -> Result<f64, MetricsError> {
    let n_sub = sample.n_subcarriers();
    if v_hat.n_tx != sample.n_tx || v_hat.n_subcarriers() != n_sub || v_hat.n_streams > sample.n_rx {
        return Err(MetricsError::Shape(format!(
            "precoder {}x{} over {} tones for a {}x{} channel over {n_sub} tones",
            v_hat.n_tx,
            v_hat.n_streams,
            v_hat.n_subcarriers(),
            sample.n_rx,
            sample.n_tx
        )));
    }
    if snr_db.is_nan() {
        return Err(MetricsError::Invalid("snr is NaN".into()));
    }
    let ns = v_hat.n_streams;
    let noise_std = if snr_db == f64::INFINITY { 0.0 } else { (10f64.powf(-snr_db / 10.0) / 2.0).sqrt() };
    let tx_scale = 1.0 / (ns as f64).sqrt();
    let mut rng = rng::stream(seed, 0x6576_6d);
    let qpsk = |rng: &mut rand_chacha::ChaCha8Rng| {
        let re = if rng.gen::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
        let im = if rng.gen::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
        Complex64::new(re, im)
    };

    let (mut err, mut sig) = (0.0, 0.0);
    for k in 0..n_sub {
        let precoder = DMatrix::from_fn(sample.n_tx, ns, |r, c| {
            let col = v_hat.column(k, c);
            let n = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if n > 0.0 { col[r] / n } else { Complex64::new(0.0, 0.0) }
        });
        let eff = sample.matrix(k) * &precoder * Complex64::new(tx_scale, 0.0);
        let gram = eff.adjoint() * &eff;
        let scale = gram.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let inv = gram.try_inverse().ok_or(MetricsError::SingularChannel(k))?;
        if scale <= 1e-14 || inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(MetricsError::SingularChannel(k));
        }
        let equalizer = inv * eff.adjoint();
        for _ in 0..n_symbols {
            let s = DMatrix::from_fn(ns, 1, |_, _| qpsk(&mut rng));
            let mut y = &eff * &s;
            if noise_std > 0.0 {
                for z in y.iter_mut() {
                    *z += Complex64::new(rng.sample::<f64, _>(rand_distr::StandardNormal), rng.sample::<f64, _>(rand_distr::StandardNormal)) * noise_std;
                }
            }
            let s_hat = &equalizer * y;
            err += (s_hat - &s).iter().map(|z| z.norm_sqr()).sum::<f64>();
            sig += s.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
    }
    if sig == 0.0 {
        return Err(MetricsError::Invalid("no symbols simulated".into()));
    }
    Ok((10.0 * (err / sig).log10()).max(EVM_FLOOR_DB))
}
