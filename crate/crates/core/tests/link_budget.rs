use fpnet_core::channel::{generate_environment, sample_csi, Region, SystemConfig};
use fpnet_core::codec::extract_bfm;
use fpnet_core::metrics::{gamma_from_evm, gross_throughput, net_throughput, simulate_link_evm, McsTable, TimingModel};
use proptest::prelude::*;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

#[test]
fn gross_rate_anchors() {
    let sys = SystemConfig::default();
    let table = McsTable::default();
    assert_eq!(gamma_from_evm(-20.61, &table), 3.0);
    assert_eq!(gamma_from_evm(-16.28, &table), 2.0);
    assert!((gross_throughput(3.0, &sys) - 42.0e6).abs() < 1e-6);
    assert!((gross_throughput(2.0, &sys) - 28.0e6).abs() < 1e-6);
}

#[test]
fn net_rate_inversion_against_reported_values() {
    let t = TimingModel::default();
    let learned = net_throughput(28.0e6, 100, &t);
    let type0 = net_throughput(42.0e6, 672, &t);
    let type1 = net_throughput(42.0e6, 896, &t);
    assert!(learned > type0 && type0 > type1);
    for (got, reported) in [(learned, 10.35e6), (type0, 8.42e6), (type1, 7.57e6)] {
        assert!(close(got, reported, 0.10), "{got} vs {reported}");
    }
}

/// With the exact dominant singular vector as precoder, one stream and
/// zero-forcing at the receiver, the symbol error on tone k is white with
/// variance sigma^2 / s_k^2, where s_k is the largest singular value.
#[test]
fn exact_precoder_evm_matches_singular_value_prediction() {
    let sys = SystemConfig::default();
    let env = generate_environment(&sys, 20, 30, 9).unwrap();
    let sample = sample_csi(&sys, &env, Region::Zone(7), 1, f64::INFINITY, 4).unwrap().samples.remove(0);
    let v = extract_bfm(&sample, 1).unwrap();
    for snr in [10.0, 25.0] {
        let noise = 10f64.powf(-snr / 10.0);
        let mean_inv_gain: f64 = (0..sample.n_subcarriers())
            .map(|k| {
                let s = sample.matrix(k).singular_values();
                1.0 / (s.max() * s.max())
            })
            .sum::<f64>()
            / sample.n_subcarriers() as f64;
        let predicted = 10.0 * (noise * mean_inv_gain).log10();
        let simulated = simulate_link_evm(&sample, &v, snr, 4000, 1).unwrap();
        assert!((simulated - predicted).abs() < 0.15, "snr {snr}: {simulated} vs {predicted}");
    }
}

proptest! {
    #[test]
    fn worse_evm_never_raises_the_rate(a in -40.0f64..0.0, b in -40.0f64..0.0) {
        let (sys, table) = (SystemConfig::default(), McsTable::default());
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(gross_throughput(gamma_from_evm(hi, &table), &sys) <= gross_throughput(gamma_from_evm(lo, &table), &sys));
    }

    #[test]
    fn more_feedback_bits_cost_net_rate(bits in 0usize..5000, extra in 1usize..500, gross in 1e6f64..1e8) {
        let t = TimingModel::default();
        let (few, many) = (net_throughput(gross, bits, &t), net_throughput(gross, bits + extra, &t));
        prop_assert!(many < few);
        prop_assert!(few <= gross);
    }
}
