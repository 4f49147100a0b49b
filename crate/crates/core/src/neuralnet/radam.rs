//! Rectified Adam.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RAdam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the full gradient to at most this L2 norm before the update.
    pub max_grad_norm: Option<f64>,
    pub step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Default for RAdam {
    fn default() -> Self {
        RAdam::new(1e-3)
    }
}

impl RAdam {
    pub fn new(lr: f64) -> Self {
        RAdam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: None,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    /// Drops accumulated moments and the step counter.
    pub fn reset(&mut self) {
        self.step = 0;
        self.first_moment.clear();
        self.second_moment.clear();
    }

    /// Length of the SMA; the adaptive term is used only once it exceeds 5.
    pub fn rho(&self, t: u64) -> f64 {
        let rho_inf = 2.0 / (1.0 - self.beta2) - 1.0;
        let b2t = self.beta2.powi(t as i32);
        rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t)
    }

    /// Applies one update; `params` and `grads` are visited in the same order
    /// on every call.
    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count");
        if self.first_moment.is_empty() {
            self.first_moment = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second_moment = self.first_moment.clone();
        }
        let scale = match self.max_grad_norm {
            Some(max) => {
                let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        self.step += 1;
        let t = self.step;
        let (b1, b2) = (self.beta1, self.beta2);
        let bias1 = 1.0 - b1.powi(t as i32);
        let bias2 = 1.0 - b2.powi(t as i32);
        let rho_inf = 2.0 / (1.0 - b2) - 1.0;
        let rho_t = self.rho(t);
        let rect = if rho_t > 5.0 {
            Some(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt())
        } else {
            None
        };

        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for i in 0..p.len() {
                let gi = g[i] * scale;
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bias1;
                p[i] -= match rect {
                    Some(r) => self.lr * m_hat * r * bias2.sqrt() / (v[i].sqrt() + self.eps),
                    None => self.lr * m_hat,
                };
            }
        }
    }
}
