use std::f64::consts::{FRAC_PI_2, PI};

use fpnet_core::codec::{
    angle_count, angle_order, dequantize_angles, givens_decompose, givens_reconstruct, quantize_angles, BfmMatrix,
    FeedbackKind,
};
use fpnet_core::metrics::sgcs;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Orthonormal columns from the QR factor of a complex Gaussian matrix,
/// canonicalized.
fn random_bfm(rng: &mut ChaCha8Rng, n_sub: usize, n_tx: usize, n_streams: usize) -> BfmMatrix {
    let mut out = BfmMatrix::zeros(n_sub, n_tx, n_streams);
    for k in 0..n_sub {
        let g = DMatrix::from_fn(n_tx, n_tx, |_, _| {
            Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        });
        let q = g.qr().q();
        for c in 0..n_streams {
            for r in 0..n_tx {
                out.set(k, r, c, q[(r, c)]);
            }
        }
    }
    out.canonicalize();
    out
}

/// Per-column |<a, b>|^2 / (|a|^2 |b|^2), averaged; written out independently
/// of the library metric.
fn cosine_oracle(a: &BfmMatrix, b: &BfmMatrix) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for k in 0..a.n_subcarriers() {
        for c in 0..a.n_streams {
            let (mut re, mut im, mut na, mut nb) = (0.0, 0.0, 0.0, 0.0);
            for r in 0..a.n_tx {
                let (x, y) = (a.get(k, r, c), b.get(k, r, c));
                re += x.re * y.re + x.im * y.im;
                im += x.re * y.im - x.im * y.re;
                na += x.re * x.re + x.im * x.im;
                nb += y.re * y.re + y.im * y.im;
            }
            total += (re * re + im * im) / (na * nb);
            n += 1;
        }
    }
    total / n as f64
}

#[test]
fn angle_table_rows() {
    // (n_tx, n_streams, angles, type 0 bits, type 1 bits, order)
    let rows = [
        (2, 1, 2, 12, 16, "phi11 psi21"),
        (2, 2, 2, 12, 16, "phi11 psi21"),
        (3, 1, 4, 24, 32, "phi11 phi21 psi21 psi31"),
        (3, 2, 6, 36, 48, "phi11 phi21 psi21 psi31 phi22 psi32"),
        (3, 3, 6, 36, 48, "phi11 phi21 psi21 psi31 phi22 psi32"),
    ];
    for (nt, ns, angles, b0, b1, order) in rows {
        let c = angle_count(nt, ns).unwrap();
        assert_eq!(c.n_phi + c.n_psi, angles, "{nt}x{ns}");
        assert_eq!((c.bits_type0, c.bits_type1), (b0, b1), "{nt}x{ns}");
        let names: Vec<String> = angle_order(nt, ns).iter().map(|a| a.to_string()).collect();
        assert_eq!(names.join(" "), order);
    }
}

#[test]
fn frames_for_28_tones_carry_672_and_896_bits() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v = random_bfm(&mut rng, 28, 3, 1);
    let angles = givens_decompose(&v).unwrap();
    for (kind, bits) in [(FeedbackKind::Type0, 672), (FeedbackKind::Type1, 896)] {
        let frame = quantize_angles(&angles, kind).unwrap();
        assert_eq!(frame.payload_bits(), bits);
        assert_eq!(frame.bits_per_subcarrier() * 28, bits);
    }
}

#[test]
fn three_by_one_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (p11, p21) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
        let (s21, s31) = (rng.gen_range(0.01..FRAC_PI_2 - 0.01), rng.gen_range(0.01..FRAC_PI_2 - 0.01));
        let col = [
            Complex64::from_polar(s21.cos() * s31.cos(), p11),
            Complex64::from_polar(s21.sin() * s31.cos(), p21),
            Complex64::new(s31.sin(), 0.0),
        ];
        let v = BfmMatrix { n_tx: 3, n_streams: 1, v: col.to_vec() };
        let a = givens_decompose(&v).unwrap();
        for (got, want) in a.phi.iter().zip([p11, p21]) {
            let d = (got - want).rem_euclid(2.0 * PI);
            assert!(d.min(2.0 * PI - d) < 1e-9, "phi {got} vs {want}");
        }
        assert!((a.psi[0] - s21).abs() < 1e-9 && (a.psi[1] - s31).abs() < 1e-9);
        let back = givens_reconstruct(&a, 3, 1).unwrap();
        for (x, y) in back.v.iter().zip(&v.v) {
            assert!((x - y).norm() < 1e-12);
        }
    }
}

#[test]
fn thousand_random_round_trips() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 1.0;
    for i in 0..1000 {
        let ns = 1 + i % 2;
        let v = random_bfm(&mut rng, 1, 3, ns);
        let back = givens_reconstruct(&givens_decompose(&v).unwrap(), 3, ns).unwrap();
        worst = worst.min(sgcs(&back, &v).unwrap());
    }
    assert!(worst >= 1.0 - 1e-10, "worst SGCS {worst}");
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn finer_quantizer_wins_on_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut s0, mut s1) = (0.0, 0.0);
    for _ in 0..500 {
        let v = random_bfm(&mut rng, 28, 3, 1);
        let a = givens_decompose(&v).unwrap();
        for (kind, acc) in [(FeedbackKind::Type0, &mut s0), (FeedbackKind::Type1, &mut s1)] {
            let frame = quantize_angles(&a, kind).unwrap();
            let v_hat = givens_reconstruct(&dequantize_angles(&frame).unwrap(), 3, 1).unwrap();
            *acc += sgcs(&v_hat, &v).unwrap() / 500.0;
        }
    }
    assert!(s1 >= s0, "type 1 {s1} < type 0 {s0}");
    assert!(s0 >= 0.995, "type 0 {s0}");
}

proptest! {
    #[test]
    fn decompose_then_reconstruct_is_identity(seed in any::<u64>(), n_tx in 2usize..=5, ns_pick in 0usize..5) {
        let ns = 1 + ns_pick % n_tx;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_bfm(&mut rng, 4, n_tx, ns);
        let back = givens_reconstruct(&givens_decompose(&v).unwrap(), n_tx, ns).unwrap();
        prop_assert!(sgcs(&back, &v).unwrap() >= 1.0 - 1e-10);
    }

    #[test]
    fn canonical_form_is_idempotent_and_invisible_to_sgcs(seed in any::<u64>(), phase in 0.0f64..6.28) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_bfm(&mut rng, 3, 3, 2);
        let mut rotated = v.clone();
        rotated.v.iter_mut().for_each(|z| *z *= Complex64::from_polar(1.0, phase));
        let c = rotated.canonical();
        prop_assert_eq!(&c.canonical(), &c);
        let lib = sgcs(&c, &rotated).unwrap();
        prop_assert!((lib - 1.0).abs() < 1e-12);
        prop_assert!((lib - cosine_oracle(&c, &rotated)).abs() < 1e-12);
    }

    #[test]
    fn sgcs_agrees_with_the_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_bfm(&mut rng, 5, 4, 2), random_bfm(&mut rng, 5, 4, 2));
        let lib = sgcs(&a, &b).unwrap();
        prop_assert!((lib - cosine_oracle(&a, &b)).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&lib));
    }
}
