use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Standard deviation of He initialisation for a layer followed by a leaky
/// ReLU with negative slope `slope`.
pub fn he_std(fan_in: usize, slope: f64) -> f64 {
    (2.0 / ((1.0 + slope * slope) * fan_in as f64)).sqrt()
}

pub(crate) fn he_sample<R: Rng + ?Sized>(fan_in: usize, slope: f64, rng: &mut R) -> f64 {
    Normal::new(0.0, he_std(fan_in, slope)).expect("positive std").sample(rng)
}

/// Affine layer `y = x W^T + b`; `weight` is `out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn he<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, slope: f64, rng: &mut R) -> Self {
        let weight = Array2::from_shape_simple_fn((out_dim, in_dim), || he_sample(in_dim, slope, rng));
        Linear {
            weight,
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Returns `(dx, dW, db)`.
    pub(crate) fn backward(&self, x: &Array2<f64>, dz: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
        let dw = dz.t().dot(x);
        let db = dz.sum_axis(Axis(0));
        let dx = dz.dot(&self.weight);
        (dx, dw, db)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

pub(crate) struct BatchNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl BatchNorm {
    pub const MOMENTUM: f64 = 0.1;
    pub const EPS: f64 = 1e-5;

    pub fn new(width: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: Self::MOMENTUM,
            eps: Self::EPS,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    /// Resets the running statistics to their initial values.
    pub fn reset_running_stats(&mut self) {
        self.running_mean.fill(0.0);
        self.running_var.fill(1.0);
    }

    /// Normalises with batch statistics and folds them into the running
    /// estimates (unbiased variance for the running estimate).
    pub(crate) fn forward_train(&mut self, z: &Array2<f64>) -> (Array2<f64>, BatchNormCache) {
        let b = z.nrows() as f64;
        let mean = z.mean_axis(Axis(0)).expect("nonempty batch");
        let centered = z - &mean;
        let var = centered.mapv(|c| c * c).sum_axis(Axis(0)) / b;
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let xhat = &centered * &inv_std;
        let y = &xhat * &self.gamma + &self.beta;

        let m = self.momentum;
        self.running_mean = &self.running_mean * (1.0 - m) + &mean * m;
        self.running_var = &self.running_var * (1.0 - m) + &var * (m * b / (b - 1.0));
        (y, BatchNormCache { xhat, inv_std })
    }

    pub fn forward_eval(&self, z: &Array2<f64>) -> Array2<f64> {
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        (z - &self.running_mean) * &inv_std * &self.gamma + &self.beta
    }

    /// Returns `(dz, dgamma, dbeta)`.
    pub(crate) fn backward(&self, dy: &Array2<f64>, cache: &BatchNormCache) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let b = dy.nrows() as f64;
        let dbeta = dy.sum_axis(Axis(0));
        let dgamma = (dy * &cache.xhat).sum_axis(Axis(0));
        let dxhat = dy * &self.gamma;
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        let dz = (dxhat * b - &sum_dxhat - &cache.xhat * &sum_dxhat_xhat) * &cache.inv_std / b;
        (dz, dgamma, dbeta)
    }
}

pub fn leaky_relu(z: &Array2<f64>, slope: f64) -> Array2<f64> {
    z.mapv(|v| if v > 0.0 { v } else { slope * v })
}

pub(crate) fn leaky_relu_backward(z: &Array2<f64>, da: &Array2<f64>, slope: f64) -> Array2<f64> {
    let mut dz = da.clone();
    dz.zip_mut_with(z, |d, &v| {
        if v <= 0.0 {
            *d *= slope;
        }
    });
    dz
}
