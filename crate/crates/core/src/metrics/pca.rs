use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// Projected coordinates, one row per input point.
    pub points: Vec<Vec<f64>>,
    /// Principal directions, one per output dimension.
    pub components: Vec<Vec<f64>>,
    /// Variance captured by each direction.
    pub variance: Vec<f64>,
    /// `variance` as a fraction of the total variance (0 when there is none).
    pub explained_ratio: Vec<f64>,
}

const ITERATIONS: usize = 1000;

/// Projects mean-centred points onto their top `dims` principal directions,
/// found by power iteration on the covariance with deflation.
pub fn pca_project(points: &[Vec<f64>], dims: usize, seed: u64) -> Result<Projection, MetricsError> {
    if points.len() < 2 {
        return Err(MetricsError::TooFewPoints { needed: 2, got: points.len() });
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(MetricsError::Shape("points have different dimensions".into()));
    }
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    let centred: Vec<Vec<f64>> = points.iter().map(|p| p.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let mut cov = vec![0.0; d * d];
    for p in &centred {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += p[i] * p[j] / (n - 1.0);
            }
        }
    }
    let total: f64 = (0..d).map(|i| cov[i * d + i]).sum();

    let mut rng = rng::stream(seed, 0x7063_61);
    let mut components = Vec::with_capacity(dims);
    let mut variance = Vec::with_capacity(dims);
    for _ in 0..dims.min(d) {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        normalize(&mut v);
        let mut lambda = 0.0;
        for _ in 0..ITERATIONS {
            let mut w: Vec<f64> = (0..d).map(|i| (0..d).map(|j| cov[i * d + j] * v[j]).sum()).collect();
            let norm = normalize(&mut w);
            if norm <= 1e-300 {
                lambda = 0.0;
                break;
            }
            let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
            v = w;
            lambda = norm;
            if delta < 1e-13 {
                break;
            }
        }
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        variance.push(lambda);
        components.push(v);
    }
    let projected = centred
        .iter()
        .map(|p| {
            components
                .iter()
                .zip(&variance)
                .map(|(c, &var)| if var > 0.0 { c.iter().zip(p).map(|(a, b)| a * b).sum() } else { 0.0 })
                .collect()
        })
        .collect();
    let explained_ratio = variance.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect();
    Ok(Projection { points: projected, components, variance, explained_ratio })
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points_collapse() {
        let pts = vec![vec![1.0, 2.0, 3.0]; 5];
        let p = pca_project(&pts, 2, 1).unwrap();
        assert!(p.points.iter().all(|q| q.iter().all(|x| *x == 0.0)));
        assert_eq!(p.explained_ratio, vec![0.0, 0.0]);
    }

    #[test]
    fn planar_data_keeps_distances() {
        // Points on a tilted plane in 5-D: x = a*u + b*w + offset.
        let u = [0.5, 0.5, 0.5, 0.5, 0.0];
        let w = [0.5, -0.5, 0.5, -0.5, 0.0];
        let mut r = rng::stream(3, 3);
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let (a, b) = (r.gen_range(-3.0..3.0), r.gen_range(-1.0..1.0));
                (0..5).map(|i| a * u[i] + b * w[i] + 7.0).collect()
            })
            .collect();
        let p = pca_project(&pts, 2, 9).unwrap();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                assert!((dist(&pts[i], &pts[j]) - dist(&p.points[i], &p.points[j])).abs() < 1e-8);
            }
        }
        assert!((p.explained_ratio.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.variance[0] >= p.variance[1]);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64 % 7.0, 1.0]).collect();
        assert_eq!(pca_project(&pts, 2, 4).unwrap(), pca_project(&pts, 2, 4).unwrap());
    }

    #[test]
    fn needs_two_points() {
        assert!(pca_project(&[vec![1.0]], 2, 0).is_err());
    }
}
