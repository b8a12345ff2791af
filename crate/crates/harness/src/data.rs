use fpnet_core::channel::{
    generate_environment_with, perturb_environment, sample_all_zones, sample_csi, split_dataset, CsiBatch,
    EnvironmentModel, Label, Region,
};
use fpnet_core::fpnet::BfmDataset;
use fpnet_core::rng::mix;
use serde::{Deserialize, Serialize};

use crate::{ExperimentConfig, HarnessError};

/// Which regenerable dataset a result was computed on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum DatasetKey {
    Base,
    /// The base capture, relabelled by position under a `zones`-zone layout.
    Zones { zones: usize },
    /// A perturbed copy of the base environment.
    Drift { intensity: f64 },
}

/// Split data for one experiment, as network-ready matrices plus the raw
/// channels they came from (the link simulation needs `raw_test`).
#[derive(Clone, Debug)]
pub struct Prepared {
    pub key: DatasetKey,
    pub env: EnvironmentModel,
    pub n_classes: usize,
    pub train: BfmDataset,
    pub val: BfmDataset,
    pub test: BfmDataset,
    pub ood_cal: BfmDataset,
    pub ood_test: BfmDataset,
    pub raw_train: CsiBatch,
    pub raw_val: CsiBatch,
    pub raw_test: CsiBatch,
    pub raw_ood: CsiBatch,
}

impl Prepared {
    /// Hash over every split, used to tie checkpoints to their data.
    pub fn hash(&self) -> String {
        let parts = [&self.train, &self.val, &self.test, &self.ood_cal, &self.ood_test];
        let joined: String = parts.iter().map(|d| d.hash()).collect::<Vec<_>>().join(":");
        hex::encode(<sha2::Sha256 as sha2::Digest>::digest(joined.as_bytes()))
    }
}

pub fn base_environment(cfg: &ExperimentConfig, n_zones: usize) -> Result<EnvironmentModel, HarnessError> {
    Ok(generate_environment_with(
        &cfg.system,
        &cfg.environment.params,
        n_zones,
        cfg.environment.n_scatterers,
        cfg.env_seed(),
    )?)
}

pub fn prepare(cfg: &ExperimentConfig, key: DatasetKey) -> Result<Prepared, HarnessError> {
    match key {
        DatasetKey::Base => {
            let env = base_environment(cfg, cfg.environment.n_zones)?;
            from_env(cfg, key, env, None, cfg.sample_seed())
        }
        DatasetKey::Zones { zones } => {
            // Same scatterers, new tiling: only the labels change.
            let layout = base_environment(cfg, zones)?;
            let env = base_environment(cfg, cfg.environment.n_zones)?;
            let mut p = from_env(cfg, key, env, Some(&layout), cfg.sample_seed())?;
            p.env = layout;
            p.n_classes = zones;
            Ok(p)
        }
        DatasetKey::Drift { intensity } => {
            let env = base_environment(cfg, cfg.environment.n_zones)?;
            let moved = perturb_environment(&env, intensity, mix(cfg.env_seed(), 0x6472_6966))?;
            from_env(cfg, key, moved, None, mix(cfg.sample_seed(), 0x6472_6966))
        }
    }
}

/// Labels every in-region packet with the `layout` zone containing it.
fn relabel(batch: &mut CsiBatch, layout: &EnvironmentModel) -> Result<(), HarnessError> {
    for s in &mut batch.samples {
        if s.label.zone().is_some() {
            let z = layout.zone_of(s.position).ok_or_else(|| {
                HarnessError::Missing(format!("a zone of the {}-zone layout at {:?}", layout.n_zones(), s.position))
            })?;
            s.label = Label::Zone(z);
        }
    }
    Ok(())
}

fn from_env(
    cfg: &ExperimentConfig,
    key: DatasetKey,
    env: EnvironmentModel,
    layout: Option<&EnvironmentModel>,
    seed: u64,
) -> Result<Prepared, HarnessError> {
    let snr = cfg.data.capture_snr_db;
    let all = sample_all_zones(&cfg.system, &env, cfg.data.packets_per_zone, 0, snr, seed)?;
    // Split before relabelling so every layout shares the same packets.
    let (mut train, mut val, mut test) = split_dataset(&all, cfg.data.split, cfg.split_seed())?;
    if let Some(layout) = layout {
        for part in [&mut train, &mut val, &mut test] {
            relabel(part, layout)?;
        }
    }
    let raw_ood = sample_csi(&cfg.system, &env, Region::Ood, cfg.data.ood_packets, snr, mix(seed, 0x6f6f_64))?;
    let ns = cfg.system.n_streams;
    let ood = BfmDataset::from_batch(&raw_ood, ns)?;
    let half = ood.len() / 2;
    let idx: Vec<usize> = (0..ood.len()).collect();
    Ok(Prepared {
        key,
        n_classes: env.n_zones(),
        train: BfmDataset::from_batch(&train, ns)?,
        val: BfmDataset::from_batch(&val, ns)?,
        test: BfmDataset::from_batch(&test, ns)?,
        ood_cal: ood.subset(&idx[..half]),
        ood_test: ood.subset(&idx[half..]),
        raw_train: train,
        raw_val: val,
        raw_test: test,
        raw_ood,
        env,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Profile;

    fn tiny() -> ExperimentConfig {
        let user = "[data]\npackets_per_zone = 10\nood_packets = 6\n[sweeps]\nzone_counts = [5, 20, 40]\n";
        ExperimentConfig::resolve(Profile::Quick, Some(user), Some(3)).unwrap()
    }

    #[test]
    fn base_split_sizes_and_determinism() {
        let cfg = tiny();
        let a = prepare(&cfg, DatasetKey::Base).unwrap();
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (160, 20, 20));
        assert_eq!((a.ood_cal.len(), a.ood_test.len()), (3, 3));
        assert_eq!(a.raw_test.len(), a.test.len());
        assert_eq!(a.hash(), prepare(&cfg, DatasetKey::Base).unwrap().hash());
        assert!(a.ood_test.labels.iter().all(|l| *l == Label::Ood));
    }

    #[test]
    fn zone_variants_relabel_the_base_capture() {
        let cfg = tiny();
        let base = prepare(&cfg, DatasetKey::Base).unwrap();
        let five = prepare(&cfg, DatasetKey::Zones { zones: 5 }).unwrap();
        let twenty = prepare(&cfg, DatasetKey::Zones { zones: 20 }).unwrap();
        let forty = prepare(&cfg, DatasetKey::Zones { zones: 40 }).unwrap();
        assert_eq!((five.n_classes, forty.n_classes), (5, 40));
        assert_eq!(twenty.train.labels, base.train.labels);
        for p in [&five, &forty] {
            assert_eq!(p.train.x, base.train.x);
            assert_eq!(p.test.x, base.test.x);
        }
        // Coarse labels are merges of base zones; each base zone splits in two at 40.
        let (b, f, c) = (base.train.zone_labels().unwrap(), five.train.zone_labels().unwrap(), forty.train.zone_labels().unwrap());
        for i in 0..b.len() {
            assert_eq!(f[i], b[i] / 4);
            assert_eq!(base.env.zone_of(forty.env.zones[c[i]].center), Some(b[i]));
        }
        assert!(forty.train.zone_labels().unwrap().iter().collect::<std::collections::BTreeSet<_>>().len() > 20);
    }

    #[test]
    fn drift_changes_the_channels_but_not_the_labels() {
        let cfg = tiny();
        let base = prepare(&cfg, DatasetKey::Base).unwrap();
        let moved = prepare(&cfg, DatasetKey::Drift { intensity: 0.3 }).unwrap();
        assert_eq!(base.env.zones, moved.env.zones);
        assert_ne!(base.env.scatterers, moved.env.scatterers);
        assert_eq!(base.test.len(), moved.test.len());
    }
}
