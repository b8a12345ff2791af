use serde::{Deserialize, Serialize};

use super::Param;

/// Bias-corrected Adam. Moment buffers are matched to parameters by position,
/// so a given optimizer must always be stepped with the same parameter list.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn update(&mut self, params: &mut [&mut Param]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "optimizer reused with a different parameter list");
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            p.ensure_grad();
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                p.value[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(vals: &[f64], grad: f64) -> Param {
        Param { shape: vec![vals.len()], value: vals.to_vec(), grad: vec![grad; vals.len()] }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = param(&[0.5, -1.0, 2.0], 1.0);
        let mut opt = Adam::new(1e-3);
        opt.update(&mut [&mut p]);
        for (after, before) in p.value.iter().zip([0.5, -1.0, 2.0]) {
            // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
            assert!((after - (before - 1e-3 / (1.0 + 1e-8))).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = param(&[0.5, -1.0], 0.0);
        Adam::new(1e-3).update(&mut [&mut p]);
        assert_eq!(p.value, vec![0.5, -1.0]);
    }

    #[test]
    fn identical_runs_match() {
        let run = || {
            let mut p = param(&[1.0, 2.0], 0.0);
            let mut opt = Adam::new(1e-2);
            for t in 0..50 {
                p.grad = p.value.iter().map(|x| 2.0 * x + (t as f64).sin()).collect();
                opt.update(&mut [&mut p]);
            }
            p.value
        };
        assert_eq!(run(), run());
    }
}
