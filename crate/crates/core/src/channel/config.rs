use serde::{Deserialize, Serialize};

use super::ChannelError;

/// Receiver SNR used when generating CSI captures. Estimation noise at this
/// level dominates the packet-to-packet variation inside a zone.
pub const DEFAULT_CAPTURE_SNR_DB: f64 = 5.0;

/// Antenna, stream and OFDM numerology shared by every stage of the pipeline.
///
/// The 3-antenna side plays the transmit role for beamforming feedback, so
/// the default geometry produces a `3 x 1` feedback matrix per subcarrier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_streams: usize,
    pub n_valid_subcarriers: usize,
    pub bandwidth_hz: f64,
    pub n_fft: usize,
    pub n_cp: usize,
    pub carrier_hz: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_tx: 3,
            n_rx: 2,
            n_streams: 1,
            n_valid_subcarriers: 28,
            bandwidth_hz: 40e6,
            n_fft: 64,
            n_cp: 16,
            carrier_hz: 2.4e9,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let counts = [
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("n_streams", self.n_streams),
            ("n_valid_subcarriers", self.n_valid_subcarriers),
            ("n_fft", self.n_fft),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(ChannelError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.n_streams > self.n_tx.min(self.n_rx) {
            return Err(ChannelError::InvalidConfig(format!(
                "n_streams={} exceeds min(n_tx={}, n_rx={})",
                self.n_streams, self.n_tx, self.n_rx
            )));
        }
        if self.n_valid_subcarriers > self.n_fft {
            return Err(ChannelError::InvalidConfig(format!(
                "n_valid_subcarriers={} exceeds n_fft={}",
                self.n_valid_subcarriers, self.n_fft
            )));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite())
            || !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite())
        {
            return Err(ChannelError::InvalidConfig(
                "bandwidth_hz and carrier_hz must be positive and finite".into(),
            ));
        }
        Ok(())
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.n_fft as f64
    }

    /// Baseband offsets of the reported tones.
    ///
    /// Tones are spread symmetrically around DC with a uniform grouping step,
    /// the way commodity CSI tools report a subsampled tone set. With the
    /// defaults this is every second bin in `-27..=27`, skipping DC.
    pub fn subcarrier_offsets_hz(&self) -> Vec<f64> {
        let n = self.n_valid_subcarriers;
        let step = (self.n_fft.saturating_sub(8) / n).max(1) as f64;
        let df = self.subcarrier_spacing_hz();
        (0..n)
            .map(|i| (i as f64 - (n as f64 - 1.0) / 2.0) * step * df)
            .collect()
    }

    /// Columns of the concatenated feedback matrix: `n_tx * n_streams`.
    pub fn bfm_width(&self) -> usize {
        self.n_tx * self.n_streams
    }

    /// Length of the real-valued flattened feedback matrix (real and
    /// imaginary parts as separate entries).
    pub fn flatten_len(&self) -> usize {
        self.n_valid_subcarriers * self.bfm_width() * 2
    }

    pub fn wavelength_m(&self) -> f64 {
        super::SPEED_OF_LIGHT / self.carrier_hz
    }
}
