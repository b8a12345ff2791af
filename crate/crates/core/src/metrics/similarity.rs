use num_complex::Complex64;

use super::MetricsError;
use crate::codec::BfmMatrix;

/// Squared normalized Hermitian inner product, one value per tone averaged
/// over streams.
pub fn sgcs_per_subcarrier(v_hat: &BfmMatrix, v: &BfmMatrix) -> Result<Vec<f64>, MetricsError> {
    if !v_hat.same_shape(v) {
        return Err(MetricsError::Shape(format!(
            "{}x{} with {} tones vs {}x{} with {} tones",
            v_hat.n_tx,
            v_hat.n_streams,
            v_hat.n_subcarriers(),
            v.n_tx,
            v.n_streams,
            v.n_subcarriers()
        )));
    }
    (0..v.n_subcarriers())
        .map(|k| {
            let mut acc = 0.0;
            for c in 0..v.n_streams {
                let (a, b) = (v_hat.column(k, c), v.column(k, c));
                let na: f64 = a.iter().map(|z| z.norm_sqr()).sum();
                let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
                if na == 0.0 || nb == 0.0 {
                    return Err(MetricsError::ZeroColumn { subcarrier: k, column: c });
                }
                let ip: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
                acc += ip.norm_sqr() / (na * nb);
            }
            Ok(acc / v.n_streams as f64)
        })
        .collect()
}

/// Mean squared generalized cosine similarity over tones and streams.
pub fn sgcs(v_hat: &BfmMatrix, v: &BfmMatrix) -> Result<f64, MetricsError> {
    let per = sgcs_per_subcarrier(v_hat, v)?;
    if per.is_empty() {
        return Err(MetricsError::Shape("no subcarriers".into()));
    }
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[(f64, f64)]) -> BfmMatrix {
        BfmMatrix { n_tx: v.len(), n_streams: 1, v: v.iter().map(|&(r, i)| Complex64::new(r, i)).collect() }
    }

    #[test]
    fn identical_and_orthogonal() {
        let a = col(&[(0.6, 0.0), (0.0, 0.8)]);
        assert!((sgcs(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let x = col(&[(1.0, 0.0), (0.0, 0.0)]);
        let y = col(&[(0.0, 0.0), (0.0, 1.0)]);
        assert_eq!(sgcs(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn zero_column_is_an_error() {
        let x = col(&[(1.0, 0.0), (0.0, 0.0)]);
        let z = col(&[(0.0, 0.0), (0.0, 0.0)]);
        assert!(matches!(sgcs(&x, &z), Err(MetricsError::ZeroColumn { subcarrier: 0, column: 0 })));
        assert!(sgcs(&x, &col(&[(1.0, 0.0)])).is_err());
    }

    proptest! {
        #[test]
        fn phase_invariant_and_bounded(
            re in proptest::collection::vec(-1.0f64..1.0, 6),
            im in proptest::collection::vec(-1.0f64..1.0, 6),
            theta in 0.0f64..6.3,
        ) {
            prop_assume!(re.iter().chain(&im).map(|x| x * x).sum::<f64>() > 1e-3);
            let v = BfmMatrix { n_tx: 3, n_streams: 1, v: (0..6).map(|i| Complex64::new(re[i], im[i])).collect() };
            prop_assume!((0..2).all(|k| v.column(k, 0).iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-6));
            let rot = Complex64::from_polar(1.0, theta);
            let w = BfmMatrix { v: v.v.iter().map(|z| z * rot).collect(), ..v.clone() };
            prop_assert!((sgcs(&w, &v).unwrap() - 1.0).abs() < 1e-12);
            let canon = v.canonical();
            prop_assert!((sgcs(&canon, &v).unwrap() - 1.0).abs() < 1e-12);
            let other = BfmMatrix { v: v.v.iter().rev().copied().collect(), ..v.clone() };
            let s = sgcs(&other, &v).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
        }
    }
}
