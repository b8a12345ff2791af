use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::{Complex32, Complex64};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::environment::complex_gaussian;
use super::{ChannelError, EnvironmentModel, EnvironmentTag, SystemConfig, SPEED_OF_LIGHT};
use crate::rng;

/// Class label of a packet: a zone id or the out-of-distribution corridor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Zone(usize),
    Ood,
}

impl Label {
    pub fn zone(self) -> Option<usize> {
        match self {
            Label::Zone(z) => Some(z),
            Label::Ood => None,
        }
    }
}

/// Where to place a packet when sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Zone(usize),
    Ood,
}

/// One captured packet: a channel matrix per reported tone.
///
/// `h` is stored flat in `[subcarrier][rx][tx]` order at single precision,
/// which is also the on-disk precision.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiSample {
    pub h: Vec<Complex32>,
    pub n_rx: usize,
    pub n_tx: usize,
    pub label: Label,
    pub tag: EnvironmentTag,
    pub snr_db: f64,
    /// Floor-plan position of the capture in meters.
    pub position: [f64; 2],
}

impl CsiSample {
    pub fn n_subcarriers(&self) -> usize {
        self.h.len() / (self.n_rx * self.n_tx)
    }

    pub fn entry(&self, k: usize, rx: usize, tx: usize) -> Complex64 {
        let c = self.h[(k * self.n_rx + rx) * self.n_tx + tx];
        Complex64::new(c.re as f64, c.im as f64)
    }

    /// Channel matrix of tone `k` (`n_rx x n_tx`).
    pub fn matrix(&self, k: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n_rx, self.n_tx, |r, t| self.entry(k, r, t))
    }

    pub fn mean_power(&self) -> f64 {
        self.h.iter().map(|c| c.norm_sqr() as f64).sum::<f64>() / self.h.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub env_hash: String,
    pub seed: u64,
    pub n_zones: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsiBatch {
    pub sys: SystemConfig,
    pub manifest: BatchManifest,
    pub samples: Vec<CsiSample>,
}

impl CsiBatch {
    pub fn empty(sys: SystemConfig, manifest: BatchManifest) -> Self {
        Self { sys, manifest, samples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Appends another batch drawn from the same system configuration.
    pub fn extend(&mut self, other: CsiBatch) -> Result<(), ChannelError> {
        if other.sys != self.sys {
            return Err(ChannelError::InvalidConfig(
                "cannot merge batches with different system configurations".into(),
            ));
        }
        self.samples.extend(other.samples);
        Ok(())
    }

    /// Checks shapes, finiteness and label ranges.
    pub fn validate(&self) -> Result<(), ChannelError> {
        let per = self.sys.n_valid_subcarriers * self.sys.n_rx * self.sys.n_tx;
        for (i, s) in self.samples.iter().enumerate() {
            if s.h.len() != per || s.n_rx != self.sys.n_rx || s.n_tx != self.sys.n_tx {
                return Err(ChannelError::InvalidConfig(format!("sample {i} has the wrong shape")));
            }
            if s.h.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(ChannelError::InvalidConfig(format!("sample {i} has non-finite entries")));
            }
            if let Label::Zone(z) = s.label {
                if z >= self.manifest.n_zones {
                    return Err(ChannelError::InvalidConfig(format!(
                        "sample {i} label {z} outside [0, {})",
                        self.manifest.n_zones
                    )));
                }
            }
        }
        Ok(())
    }

    /// Relabels zones through `map` (used to merge fine zones into coarse ones).
    pub fn relabel(&self, map: &[usize], n_zones: usize) -> CsiBatch {
        let mut out = self.clone();
        out.manifest.n_zones = n_zones;
        for s in &mut out.samples {
            if let Label::Zone(z) = s.label {
                s.label = Label::Zone(map[z]);
            }
        }
        out
    }
}

/// Channel of a single transmit position, noise free, tone by tone.
///
/// The channel is a sum of a direct path and single-bounce scatterer paths.
/// Each path contributes `g e^{-j 2 pi f tau}` times far-field array phases
/// on both ends. Path gains are relative to the direct path, which has unit
/// power, so the channel power does not depend on range. Scattered amplitudes
/// are split across scatterers so their total power does not grow with the
/// scatterer count.
pub fn channel_at(
    sys: &SystemConfig,
    env: &EnvironmentModel,
    sta: [f64; 2],
) -> Vec<Complex64> {
    let p = &env.params;
    let lambda = sys.wavelength_m();
    let dt = p.tx_spacing_wavelengths * lambda;
    let dr = p.rx_spacing_wavelengths * lambda;
    let wall = 10f64.powf(-p.wall_loss_db / 20.0);
    let ap = env.ap_position;
    let d0 = dist(sta, ap);
    let per_scatterer = p.scatter_gain / (env.scatterers.len().max(1) as f64).sqrt();

    // (gain, delay, departure cosine at the STA array, arrival cosine at the AP array)
    let mut paths: Vec<(Complex64, f64, f64, f64)> = Vec::with_capacity(env.scatterers.len() + 1);
    let los_loss = if crosses_wall(sta, ap) { wall } else { 1.0 };
    paths.push((
        Complex64::new(los_loss, 0.0),
        d0 / SPEED_OF_LIGHT,
        (ap[0] - sta[0]) / d0,
        (sta[0] - ap[0]) / d0,
    ));
    for s in &env.scatterers {
        let d1 = dist(sta, s.position);
        let d2 = dist(s.position, ap);
        if d1 < 1e-3 || d2 < 1e-3 {
            continue;
        }
        let mut g = s.reflectivity * (per_scatterer * d0 / (d1 + d2));
        if crosses_wall(sta, s.position) {
            g *= wall;
        }
        if crosses_wall(s.position, ap) {
            g *= wall;
        }
        paths.push((g, (d1 + d2) / SPEED_OF_LIGHT, (s.position[0] - sta[0]) / d1, (s.position[0] - ap[0]) / d2));
    }

    let offsets = sys.subcarrier_offsets_hz();
    let mut h = vec![Complex64::new(0.0, 0.0); offsets.len() * sys.n_rx * sys.n_tx];
    for (k, off) in offsets.iter().enumerate() {
        let f = sys.carrier_hz + off;
        let kw = 2.0 * PI * f / SPEED_OF_LIGHT;
        for &(g, tau, cos_tx, cos_rx) in &paths {
            let base = g * Complex64::from_polar(1.0, -2.0 * PI * f * tau);
            for r in 0..sys.n_rx {
                let ar = Complex64::from_polar(1.0, kw * r as f64 * dr * cos_rx);
                for t in 0..sys.n_tx {
                    let at = Complex64::from_polar(1.0, kw * t as f64 * dt * cos_tx);
                    h[(k * sys.n_rx + r) * sys.n_tx + t] += base * ar * at;
                }
            }
        }
    }
    h
}

/// Draws `n_packets` noisy CSI captures from a zone (jittered around its
/// center) or from anywhere in the corridor.
pub fn sample_csi(
    sys: &SystemConfig,
    env: &EnvironmentModel,
    region: Region,
    n_packets: usize,
    snr_db: f64,
    seed: u64,
) -> Result<CsiBatch, ChannelError> {
    sys.validate()?;
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(ChannelError::InvalidSnr(snr_db));
    }
    let (zone, label, stream) = match region {
        Region::Zone(z) => {
            let zone = env.zones.get(z).ok_or(ChannelError::UnknownZone(z))?;
            (zone, Label::Zone(z), z as u64)
        }
        Region::Ood => (&env.ood_region, Label::Ood, u64::MAX),
    };
    let (lo, hi) = (zone.min(), zone.max());
    let r = match region {
        Region::Ood => [zone.extent[0] / 2.0, zone.extent[1] / 2.0],
        Region::Zone(_) => [
            env.params.jitter_radius_m.min(zone.extent[0] / 2.0),
            env.params.jitter_radius_m.min(zone.extent[1] / 2.0),
        ],
    };
    let noise_power = if snr_db == f64::INFINITY { 0.0 } else { 10f64.powf(-snr_db / 10.0) };
    let mut rng = rng::stream(rng::mix(seed, stream), 0x6373_6921);

    let manifest = BatchManifest { env_hash: env.hash(), seed, n_zones: env.n_zones() };
    let mut batch = CsiBatch::empty(sys.clone(), manifest);
    for _ in 0..n_packets {
        let mut pos = zone.center;
        for a in 0..2 {
            if r[a] > 0.0 {
                pos[a] = (pos[a] + rng.gen_range(-r[a]..=r[a])).clamp(lo[a], hi[a]);
            }
        }
        let clean = channel_at(sys, env, pos);
        let h = clean
            .into_iter()
            .map(|c| {
                let c = if noise_power > 0.0 { c + complex_gaussian(&mut rng, noise_power) } else { c };
                Complex32::new(c.re as f32, c.im as f32)
            })
            .collect();
        batch.samples.push(CsiSample { h, n_rx: sys.n_rx, n_tx: sys.n_tx, label, tag: env.tag, snr_db, position: pos });
    }
    Ok(batch)
}

/// Samples every zone (and optionally the corridor) into one batch. Each
/// region draws from its own stream, so the result does not depend on
/// iteration order.
pub fn sample_all_zones(
    sys: &SystemConfig,
    env: &EnvironmentModel,
    packets_per_zone: usize,
    ood_packets: usize,
    snr_db: f64,
    seed: u64,
) -> Result<CsiBatch, ChannelError> {
    let manifest = BatchManifest { env_hash: env.hash(), seed, n_zones: env.n_zones() };
    let mut out = CsiBatch::empty(sys.clone(), manifest);
    for z in 0..env.n_zones() {
        out.extend(sample_csi(sys, env, Region::Zone(z), packets_per_zone, snr_db, seed)?)?;
    }
    if ood_packets > 0 {
        out.extend(sample_csi(sys, env, Region::Ood, ood_packets, snr_db, seed)?)?;
    }
    Ok(out)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// The corridor wall is the line `y = 0`.
fn crosses_wall(a: [f64; 2], b: [f64; 2]) -> bool {
    (a[1] < 0.0) != (b[1] < 0.0)
}
