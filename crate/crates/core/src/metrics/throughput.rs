use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::channel::SystemConfig;

/// Step map from measured EVM to average bits per subcarrier.
///
/// `steps` are `(evm_threshold_db, gamma)` with strictly decreasing
/// thresholds and strictly increasing `gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McsTable {
    pub steps: Vec<(f64, f64)>,
}

impl Default for McsTable {
    /// Anchored so that -16.28 dB maps to 2 bits and -20.61 dB to 3 bits.
    fn default() -> Self {
        Self { steps: vec![(-10.0, 1.0), (-13.0, 1.5), (-16.0, 2.0), (-20.0, 3.0), (-27.0, 3.333), (-30.0, 4.0)] }
    }
}

impl McsTable {
    /// Modulation bits times code rate for the usual BPSK..64-QAM ladder.
    pub fn standard_ladder() -> Self {
        Self {
            steps: vec![
                (-10.0, 1.0),
                (-13.0, 1.5),
                (-16.0, 2.0),
                (-19.0, 2.25),
                (-22.0, 2.667),
                (-25.0, 3.0),
                (-27.0, 3.333),
                (-30.0, 4.0),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.steps.is_empty() {
            return Err(MetricsError::Invalid("empty MCS table".into()));
        }
        for w in self.steps.windows(2) {
            if !(w[1].0 < w[0].0 && w[1].1 > w[0].1) {
                return Err(MetricsError::Invalid(format!(
                    "MCS steps {:?} then {:?}: thresholds must fall while gamma rises",
                    w[0], w[1]
                )));
            }
        }
        if self.steps.iter().any(|(t, g)| !t.is_finite() || !(*g > 0.0)) {
            return Err(MetricsError::Invalid("MCS entries must be finite with positive gamma".into()));
        }
        Ok(())
    }
}

/// Largest `gamma` whose threshold the measured EVM meets; 0 if none.
pub fn gamma_from_evm(evm_db: f64, table: &McsTable) -> f64 {
    table.steps.iter().filter(|(t, _)| evm_db <= *t).map(|(_, g)| *g).fold(0.0, f64::max)
}

pub fn gross_throughput(gamma: f64, sys: &SystemConfig) -> f64 {
    sys.n_valid_subcarriers as f64 / (sys.n_fft + sys.n_cp) as f64 * sys.bandwidth_hz * gamma
}

/// Airtime model of one sounding exchange followed by one data packet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingModel {
    /// Announcement, sounding, acknowledgement and report framing (s).
    pub t_fixed_overhead: f64,
    /// Rate at which the feedback payload is sent (bit/s).
    pub r_ctrl: f64,
    pub payload_bytes: usize,
}

impl Default for TimingModel {
    /// Least-squares fit to reported net rates of 100-, 672- and 896-bit
    /// feedback at 28, 42 and 42 Mb/s gross.
    fn default() -> Self {
        Self { t_fixed_overhead: 132e-6, r_ctrl: 7e6, payload_bytes: 300 }
    }
}

impl TimingModel {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.t_fixed_overhead > 0.0 && self.r_ctrl > 0.0 && self.payload_bytes > 0) {
            return Err(MetricsError::Invalid(format!("timing model {self:?} must be positive")));
        }
        Ok(())
    }
}

pub fn net_throughput(r_gross: f64, feedback_bits: usize, timing: &TimingModel) -> f64 {
    if r_gross <= 0.0 {
        return 0.0;
    }
    let t_data = timing.payload_bytes as f64 * 8.0 / r_gross;
    let t_overhead = timing.t_fixed_overhead + feedback_bits as f64 / timing.r_ctrl;
    r_gross * t_data / (t_data + t_overhead)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gross_rate_anchors() {
        let sys = SystemConfig::default();
        assert!((gross_throughput(3.0, &sys) - 42.0e6).abs() < 1e-6);
        assert!((gross_throughput(2.0, &sys) - 28.0e6).abs() < 1e-6);
        assert_eq!(gross_throughput(0.0, &sys), 0.0);
    }

    #[test]
    fn gamma_anchors() {
        let t = McsTable::default();
        t.validate().unwrap();
        McsTable::standard_ladder().validate().unwrap();
        assert_eq!(gamma_from_evm(-20.61, &t), 3.0);
        assert_eq!(gamma_from_evm(-16.28, &t), 2.0);
        assert_eq!(gamma_from_evm(-3.0, &t), 0.0);
    }

    #[test]
    fn invalid_tables_are_rejected() {
        assert!(McsTable { steps: vec![(-10.0, 2.0), (-13.0, 1.0)] }.validate().is_err());
        assert!(McsTable { steps: vec![(-13.0, 1.0), (-10.0, 2.0)] }.validate().is_err());
        assert!(McsTable { steps: vec![] }.validate().is_err());
    }

    #[test]
    fn net_rate_with_explicit_constants() {
        // T = 2400 / 28e6 s, overhead = 140e-6 + 100 / 6e6 s.
        let timing = TimingModel { t_fixed_overhead: 140e-6, r_ctrl: 6e6, payload_bytes: 300 };
        let t = 2400.0 / 28e6;
        let oh = 140e-6 + 100.0 / 6e6;
        let expect = 28e6 * t / (t + oh);
        let got = net_throughput(28e6, 100, &timing);
        assert!((got - expect).abs() < 1e-6);
        assert!((9.9e6..=10.4e6).contains(&got), "{got}");
    }

    #[test]
    fn default_timing_reproduces_reported_net_rates() {
        let tm = TimingModel::default();
        for (gross, bits, reported) in [(28e6, 100, 10.35e6), (42e6, 672, 8.42e6), (42e6, 896, 7.57e6)] {
            let r = net_throughput(gross, bits, &tm);
            assert!((r - reported).abs() / reported < 0.01, "{bits} bits: {r}");
        }
    }

    #[test]
    fn zero_feedback_specialization() {
        let tm = TimingModel::default();
        let t = 2400.0 / 42e6;
        assert!((net_throughput(42e6, 0, &tm) - 42e6 * t / (t + tm.t_fixed_overhead)).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn rates_are_monotone(e1 in -40.0f64..0.0, e2 in -40.0f64..0.0, bits in 0usize..2000, gross in 1e6f64..1e8) {
            let sys = SystemConfig::default();
            let t = McsTable::default();
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(gross_throughput(gamma_from_evm(hi, &t), &sys) <= gross_throughput(gamma_from_evm(lo, &t), &sys));
            let tm = TimingModel::default();
            let r = net_throughput(gross, bits, &tm);
            prop_assert!(r < gross);
            prop_assert!(net_throughput(gross, bits + 1, &tm) < r);
        }
    }
}
