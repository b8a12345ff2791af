use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{ChannelError, CsiBatch, Label};
use crate::rng;

/// Stratified, seeded train/validation/test partition.
///
/// Each label group is shuffled independently and cut by largest-remainder
/// rounding of `ratios`, so per-group counts match the ratios to within one
/// sample and every part with a positive ratio receives at least one sample.
pub fn split_dataset(
    batch: &CsiBatch,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(CsiBatch, CsiBatch, CsiBatch), ChannelError> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || ((r[0] + r[1] + r[2]) - 1.0).abs() > 1e-9 {
        return Err(ChannelError::InvalidSplit(ratios));
    }
    let parts = r.iter().filter(|x| **x > 0.0).count();

    let mut groups: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, s) in batch.samples.iter().enumerate() {
        groups.entry(s.label).or_default().push(i);
    }

    let mut out: [Vec<usize>; 3] = Default::default();
    for (label, mut idx) in groups {
        if idx.len() < parts {
            return Err(ChannelError::ZoneTooSmall { label, available: idx.len(), parts });
        }
        let key = match label {
            Label::Zone(z) => z as u64,
            Label::Ood => u64::MAX,
        };
        idx.shuffle(&mut rng::stream(rng::mix(seed, key), 0x7370_6c74));
        let counts = part_sizes(idx.len(), &r);
        let mut start = 0;
        for (p, c) in counts.iter().enumerate() {
            out[p].extend_from_slice(&idx[start..start + c]);
            start += c;
        }
    }

    let take = |ids: &mut Vec<usize>| {
        ids.sort_unstable();
        let mut b = CsiBatch::empty(batch.sys.clone(), batch.manifest.clone());
        b.samples = ids.iter().map(|&i| batch.samples[i].clone()).collect();
        b
    };
    let [mut a, mut b, mut c] = out;
    Ok((take(&mut a), take(&mut b), take(&mut c)))
}

fn part_sizes(n: usize, r: &[f64; 3]) -> [usize; 3] {
    let raw: Vec<f64> = r.iter().map(|x| x * n as f64).collect();
    let mut counts = [0usize; 3];
    for p in 0..3 {
        counts[p] = (raw[p] + 1e-9).floor() as usize;
    }
    let rest = n - counts.iter().sum::<usize>().min(n);
    let mut order: Vec<usize> = (0..3).filter(|&p| r[p] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - counts[a] as f64;
        let fb = raw[b] - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &p in order.iter().cycle().take(rest) {
        counts[p] += 1;
    }
    // Every positive part gets at least one sample.
    for p in 0..3 {
        if r[p] > 0.0 && counts[p] == 0 {
            let donor = (0..3).max_by_key(|&q| counts[q]).unwrap();
            counts[donor] -= 1;
            counts[p] += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_environment, sample_all_zones, SystemConfig};

    fn batch(per_zone: usize) -> CsiBatch {
        let sys = SystemConfig::default();
        let env = generate_environment(&sys, 4, 5, 1).unwrap();
        sample_all_zones(&sys, &env, per_zone, per_zone, 25.0, 2).unwrap()
    }

    fn count(b: &CsiBatch, l: Label) -> usize {
        b.samples.iter().filter(|s| s.label == l).count()
    }

    #[test]
    fn eight_one_one() {
        let b = batch(500);
        let (tr, va, te) = split_dataset(&b, (0.8, 0.1, 0.1), 3).unwrap();
        for z in 0..4 {
            assert_eq!(count(&tr, Label::Zone(z)), 400);
            assert_eq!(count(&va, Label::Zone(z)), 50);
            assert_eq!(count(&te, Label::Zone(z)), 50);
        }
        assert_eq!(count(&tr, Label::Ood), 400);
    }

    #[test]
    fn all_train() {
        let b = batch(7);
        let (tr, va, te) = split_dataset(&b, (1.0, 0.0, 0.0), 3).unwrap();
        assert_eq!(tr.len(), b.len());
        assert!(va.is_empty() && te.is_empty());
    }

    #[test]
    fn deterministic() {
        let b = batch(30);
        assert_eq!(split_dataset(&b, (0.8, 0.1, 0.1), 5).unwrap(), split_dataset(&b, (0.8, 0.1, 0.1), 5).unwrap());
    }

    #[test]
    fn tiny_zone_is_named() {
        let b = batch(2);
        match split_dataset(&b, (0.8, 0.1, 0.1), 1) {
            Err(ChannelError::ZoneTooSmall { available: 2, parts: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_ratios_not_summing_to_one() {
        assert!(split_dataset(&batch(5), (0.8, 0.1, 0.2), 1).is_err());
    }

    #[test]
    fn small_groups_fill_every_part() {
        assert_eq!(part_sizes(3, &[0.8, 0.1, 0.1]), [1, 1, 1]);
        assert_eq!(part_sizes(10, &[0.8, 0.1, 0.1]), [8, 1, 1]);
        assert_eq!(part_sizes(11, &[0.8, 0.1, 0.1]).iter().sum::<usize>(), 11);
    }

    proptest::proptest! {
        #[test]
        fn part_sizes_cover_the_group(n in 3usize..400, a in 0.05f64..0.9) {
            let b_ratio = (1.0 - a) / 2.0;
            let r = [a, b_ratio, 1.0 - a - b_ratio];
            let sizes = part_sizes(n, &r);
            proptest::prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            for p in 0..3 {
                proptest::prop_assert!(sizes[p] >= 1);
                proptest::prop_assert!((sizes[p] as f64 - r[p] * n as f64).abs() <= 2.0);
            }
        }
    }
}
