use std::path::Path;

use fpnet_core::adblock::AdConfig;
use fpnet_core::channel::{EnvParams, SystemConfig, DEFAULT_CAPTURE_SNR_DB};
use fpnet_core::fpnet::{EncoderConfig, TrainConfig};
use fpnet_core::metrics::{McsTable, TimingModel};
use fpnet_core::rng::mix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::HarnessError;

const QUICK: &str = include_str!("../profiles/quick.toml");
const PAPER_SCALE: &str = include_str!("../profiles/paper-scale.toml");

/// Every knob of one experiment. Component seeds (`train.seed`,
/// `adblock.seed`) are derived from `seed` when the config is resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub system: SystemConfig,
    pub environment: EnvironmentConfig,
    pub data: DataConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub adblock: AdConfig,
    pub link: LinkConfig,
    pub sweeps: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            system: SystemConfig::default(),
            environment: EnvironmentConfig::default(),
            data: DataConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            adblock: AdConfig::default(),
            link: LinkConfig::default(),
            sweeps: SweepConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub n_zones: usize,
    pub n_scatterers: usize,
    pub params: EnvParams,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self { n_zones: 20, n_scatterers: 30, params: EnvParams::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub packets_per_zone: usize,
    /// Corridor packets; half calibrate the detector, half test it.
    pub ood_packets: usize,
    pub capture_snr_db: f64,
    pub split: (f64, f64, f64),
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { packets_per_zone: 500, ood_packets: 1000, capture_snr_db: DEFAULT_CAPTURE_SNR_DB, split: (0.8, 0.1, 0.1) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub eval_snr_db: f64,
    pub n_symbols: usize,
    pub mcs: McsTable,
    pub timing: TimingModel,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self { eval_snr_db: 25.0, n_symbols: 20, mcs: McsTable::default(), timing: TimingModel::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub codeword_lens: Vec<usize>,
    pub zone_counts: Vec<usize>,
    pub knn_k: Vec<usize>,
    pub drift_intensity: f64,
    pub fine_tune_sizes: Vec<usize>,
    pub fine_tune_epochs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alphas: vec![1.0, 10.0, 30.0, 70.0, 150.0, 300.0],
            codeword_lens: vec![12, 14, 16, 18, 20],
            zone_counts: vec![5, 10, 20, 40],
            knn_k: vec![1, 3, 5, 7, 9],
            drift_intensity: 0.3,
            fine_tune_sizes: vec![100, 1000, 8000],
            fine_tune_epochs: 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    Default,
    Quick,
    PaperScale,
}

impl std::str::FromStr for Profile {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "default" | "desk" => Ok(Profile::Default),
            "quick" => Ok(Profile::Quick),
            "paper-scale" | "paper" => Ok(Profile::PaperScale),
            other => Err(HarnessError::Config(format!("unknown profile {other:?}; use quick, default or paper-scale"))),
        }
    }
}

/// Recursively overlays `top` onto `base`; tables merge key by key, every
/// other value replaces.
pub fn deep_merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    /// Defaults, then the profile, then the user's TOML text, then the seed
    /// override.
    pub fn resolve(profile: Profile, user: Option<&str>, seed: Option<u64>) -> Result<Self, HarnessError> {
        let mut value = toml::Value::try_from(Self::default()).map_err(|e| HarnessError::Config(e.to_string()))?;
        let overlay = match profile {
            Profile::Default => None,
            Profile::Quick => Some(QUICK),
            Profile::PaperScale => Some(PAPER_SCALE),
        };
        for text in overlay.into_iter().chain(user) {
            let t: toml::Value = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
            deep_merge(&mut value, t);
        }
        let mut cfg: Self = value.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        // TOML integers are signed 64-bit.
        cfg.train.seed = mix(cfg.seed, 0x7472_6169) >> 1;
        cfg.adblock.seed = mix(cfg.seed, 0x6164_626c) >> 1;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, profile: Profile, seed: Option<u64>) -> Result<Self, HarnessError> {
        let text = path.map(std::fs::read_to_string).transpose()?;
        Self::resolve(profile, text.as_deref(), seed)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.system.validate()?;
        self.encoder.validate()?;
        self.train.validate()?;
        self.adblock.validate()?;
        self.link.mcs.validate()?;
        self.link.timing.validate()?;
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.seed > i64::MAX as u64 {
            return bad("seed must fit in a signed 64-bit integer");
        }
        if self.environment.n_zones < 2 {
            return bad("environment.n_zones must be at least 2");
        }
        if self.data.packets_per_zone == 0 {
            return bad("data.packets_per_zone must be positive");
        }
        if self.sweeps.knn_k.is_empty() || self.sweeps.knn_k.contains(&0) {
            return bad("sweeps.knn_k needs at least one positive k");
        }
        if !(0.0..=1.0).contains(&self.sweeps.drift_intensity) {
            return bad("sweeps.drift_intensity must lie in [0, 1]");
        }
        if !self.data.capture_snr_db.is_finite() && self.data.capture_snr_db != f64::INFINITY {
            return bad("data.capture_snr_db must be finite or inf");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// SHA-256 of the resolved TOML.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn env_seed(&self) -> u64 {
        mix(self.seed, 0x656e_76)
    }

    pub fn sample_seed(&self) -> u64 {
        mix(self.seed, 0x7361_6d70)
    }

    pub fn split_seed(&self) -> u64 {
        mix(self.seed, 0x7370_6c74)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::resolve(Profile::Default, None, None).unwrap();
        let again = ExperimentConfig::resolve(Profile::Default, Some(&cfg.to_toml()), None).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn profile_then_user_then_seed() {
        let user = "[train]\nepochs_stage2 = 3\n[environment.params]\njitter_radius_m = 0.05\n";
        let cfg = ExperimentConfig::resolve(Profile::Quick, Some(user), Some(9)).unwrap();
        assert_eq!(cfg.train.epochs_stage2, 3);
        assert_eq!(cfg.train.epochs_stage1, 300);
        assert_eq!(cfg.data.packets_per_zone, 150);
        assert_eq!(cfg.environment.params.jitter_radius_m, 0.05);
        assert_eq!(cfg.environment.params.base_grid, [4, 5]);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.seed, mix(9, 0x7472_6169) >> 1);
        let paper = ExperimentConfig::resolve(Profile::PaperScale, None, None).unwrap();
        assert_eq!((paper.train.epochs_stage1, paper.train.epochs_stage2, paper.adblock.epochs), (500, 300, 200));
    }

    #[test]
    fn schema_violations_are_rejected() {
        assert!(ExperimentConfig::resolve(Profile::Default, Some("[train]\nepochs = 3\n"), None).is_err());
        assert!(ExperimentConfig::resolve(Profile::Default, Some("[encoder]\nquant_bits = 0\n"), None).is_err());
        assert!(ExperimentConfig::resolve(Profile::Default, Some("[sweeps]\nknn_k = [0]\n"), None).is_err());
        assert!("fast".parse::<Profile>().is_err());
    }

    #[test]
    fn merge_replaces_leaves_and_keeps_siblings() {
        let mut a: toml::Value = toml::from_str("x = 1\n[t]\na = 1\nb = [1, 2]\n").unwrap();
        deep_merge(&mut a, toml::from_str("[t]\nb = [3]\nc = true\n").unwrap());
        assert_eq!(a, toml::from_str::<toml::Value>("x = 1\n[t]\na = 1\nb = [3]\nc = true\n").unwrap());
    }
}
