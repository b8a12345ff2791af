use fpnet_core::channel::Label;
use fpnet_core::fpnet::BfmDataset;
use fpnet_harness::{knn_predict, ExperimentConfig, Profile};
use proptest::prelude::*;

fn points(coords: &[(f64, f64)], labels: &[usize]) -> BfmDataset {
    BfmDataset {
        sample_shape: [1, 1, 2],
        n_tx: 1,
        n_streams: 1,
        x: coords.iter().flat_map(|&(a, b)| [a, b]).collect(),
        labels: labels.iter().map(|&l| Label::Zone(l)).collect(),
    }
}

/// Full sort, inverse-distance vote, lowest class on ties.
fn knn_oracle(train: &[(f64, f64)], labels: &[usize], q: (f64, f64), k: usize) -> usize {
    let mut d: Vec<(f64, usize)> =
        train.iter().zip(labels).map(|(p, &l)| (((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt(), l)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = [0.0f64; 4];
    for (dist, l) in &d[..k] {
        votes[*l] += 1.0 / dist;
    }
    (0..4).fold(0, |b, c| if votes[c] > votes[b] { c } else { b })
}

proptest! {
    #[test]
    fn knn_matches_a_brute_force_vote(
        train in proptest::collection::vec(((-5.0f64..5.0, -5.0f64..5.0), 0usize..4), 9..40),
        queries in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..10),
        k in 1usize..9,
    ) {
        let coords: Vec<(f64, f64)> = train.iter().map(|t| t.0).collect();
        let labels: Vec<usize> = train.iter().map(|t| t.1).collect();
        let data = points(&coords, &labels);
        let test = points(&queries, &vec![0; queries.len()]);
        let got = knn_predict(&data, &test, k).unwrap();
        for (q, g) in queries.iter().zip(got) {
            prop_assert_eq!(g, knn_oracle(&coords, &labels, *q, k));
        }
    }

    #[test]
    fn training_points_recover_their_own_label(
        train in proptest::collection::vec(((-5.0f64..5.0, -5.0f64..5.0), 0usize..4), 2..30),
        k in 1usize..5,
    ) {
        let coords: Vec<(f64, f64)> = train.iter().map(|t| t.0).collect();
        let labels: Vec<usize> = train.iter().map(|t| t.1).collect();
        let data = points(&coords, &labels);
        let k = k.min(coords.len());
        prop_assert_eq!(knn_predict(&data, &data, k).unwrap(), labels);
    }

    #[test]
    fn resolved_configs_round_trip(seed in 0u64..=i64::MAX as u64, quick in any::<bool>()) {
        let profile = if quick { Profile::Quick } else { Profile::Default };
        let cfg = ExperimentConfig::resolve(profile, None, Some(seed)).unwrap();
        let again = ExperimentConfig::resolve(Profile::Default, Some(&cfg.to_toml()), None).unwrap();
        prop_assert_eq!(again.hash(), cfg.hash());
        prop_assert_eq!(again, cfg);
    }
}
