//! Multilayer perceptron Q-network: blocks of fully connected layer, batch
//! normalisation and leaky ReLU, then an affine output layer with one unit per
//! action. Trained with [`RAdam`] on a masked squared loss.

mod layers;
mod radam;

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::Task;

pub use layers::{he_std, leaky_relu, BatchNorm, Linear};
pub use radam::RAdam;

pub(crate) use layers::he_sample;
use layers::{leaky_relu_backward, BatchNormCache};

pub const LEAKY_SLOPE: f64 = 0.01;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenBlock {
    pub width: usize,
    pub batchnorm: bool,
    pub leaky_slope: f64,
}

impl HiddenBlock {
    pub fn new(width: usize) -> Self {
        HiddenBlock {
            width,
            batchnorm: true,
            leaky_slope: LEAKY_SLOPE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: Vec<HiddenBlock>,
    pub input_batchnorm: bool,
    pub output_dim: usize,
}

impl NetworkSpec {
    /// Default hidden widths: three 512-unit blocks for HUI and AR, one
    /// 4096-unit block for FI.
    pub fn default_widths(task: Task) -> Vec<usize> {
        match task {
            Task::Fi => vec![4096],
            Task::Hui | Task::Ar => vec![512, 512, 512],
        }
    }

    /// Network for `item_count` items: AR takes a `2M` input behind a batch
    /// normalisation layer; every task has `M + 1` outputs.
    pub fn for_task(task: Task, item_count: usize, widths: &[usize]) -> Self {
        let input_dim = match task {
            Task::Ar => 2 * item_count,
            _ => item_count,
        };
        NetworkSpec {
            input_dim,
            hidden: widths.iter().map(|&w| HiddenBlock::new(w)).collect(),
            input_batchnorm: task == Task::Ar,
            output_dim: item_count + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("network input and output must be nonempty".into()));
        }
        if self.hidden.iter().any(|b| b.width == 0) {
            return Err(Error::Config("zero-width hidden layer".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub linear: Linear,
    pub bn: Option<BatchNorm>,
    pub slope: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Parameters `Theta` of the Q-network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub spec: NetworkSpec,
    pub input_bn: Option<BatchNorm>,
    pub blocks: Vec<Block>,
    pub output: Linear,
}

struct BlockCache {
    input: Array2<f64>,
    bn: Option<BatchNormCache>,
    pre_activation: Array2<f64>,
}

struct ForwardCache {
    input_bn: Option<BatchNormCache>,
    blocks: Vec<BlockCache>,
    last_hidden: Array2<f64>,
}

impl QNetwork {
    /// He-initialised weights, zero biases, identity batch normalisation.
    pub fn initialize<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut fan_in = spec.input_dim;
        let mut blocks = Vec::with_capacity(spec.hidden.len());
        for hb in &spec.hidden {
            blocks.push(Block {
                linear: Linear::he(fan_in, hb.width, hb.leaky_slope, rng),
                bn: hb.batchnorm.then(|| BatchNorm::new(hb.width)),
                slope: hb.leaky_slope,
            });
            fan_in = hb.width;
        }
        let out_slope = spec.hidden.last().map_or(0.0, |b| b.leaky_slope);
        Ok(QNetwork {
            spec: spec.clone(),
            input_bn: spec.input_batchnorm.then(|| BatchNorm::new(spec.input_dim)),
            blocks,
            output: Linear::he(fan_in, spec.output_dim, out_slope, rng),
        })
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.spec.input_dim
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::ShapeMismatch("empty batch".into()));
        }
        Ok(())
    }

    /// Evaluation-mode forward pass using running batch-norm statistics.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut h = match &self.input_bn {
            Some(bn) => bn.forward_eval(x),
            None => x.clone(),
        };
        for block in &self.blocks {
            let mut z = block.linear.forward(&h);
            if let Some(bn) = &block.bn {
                z = bn.forward_eval(&z);
            }
            h = leaky_relu(&z, block.slope);
        }
        Ok(self.output.forward(&h))
    }

    /// Q-values of one state.
    pub fn predict_one(&self, state: &[f64]) -> Result<Vec<f64>> {
        let x = Array2::from_shape_vec((1, state.len()), state.to_vec())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(self.predict(&x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        match mode {
            Mode::Eval => self.predict(x),
            Mode::Train => Ok(self.forward_train(x)?.0),
        }
    }

    fn forward_train(&mut self, x: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(x)?;
        if x.nrows() < 2 {
            return Err(Error::ShapeMismatch("training batch needs at least 2 rows".into()));
        }
        let (mut h, input_bn) = match &mut self.input_bn {
            Some(bn) => {
                let (y, c) = bn.forward_train(x);
                (y, Some(c))
            }
            None => (x.clone(), None),
        };
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let z = block.linear.forward(&h);
            let (z, bn) = match &mut block.bn {
                Some(bn) => {
                    let (y, c) = bn.forward_train(&z);
                    (y, Some(c))
                }
                None => (z, None),
            };
            let a = leaky_relu(&z, block.slope);
            caches.push(BlockCache {
                input: std::mem::replace(&mut h, a),
                bn,
                pre_activation: z,
            });
        }
        let q = self.output.forward(&h);
        Ok((
            q,
            ForwardCache {
                input_bn,
                blocks: caches,
                last_hidden: h,
            },
        ))
    }

    /// Train-mode loss `mean_b (target_b - Q(s_b, a_b))^2` and its gradient
    /// for every parameter, in [`QNetwork::parameters`] order.
    pub fn loss_and_gradients(
        &mut self,
        batch: &Array2<f64>,
        targets: &[f64],
        actions: &[usize],
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let rows = batch.nrows();
        if targets.len() != rows || actions.len() != rows {
            return Err(Error::ShapeMismatch(format!(
                "{rows} rows, {} targets, {} actions",
                targets.len(),
                actions.len()
            )));
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= self.spec.output_dim) {
            return Err(Error::ShapeMismatch(format!("action {a} out of range")));
        }
        let (q, cache) = self.forward_train(batch)?;

        let b = rows as f64;
        let mut loss = 0.0;
        let mut dq = Array2::zeros(q.raw_dim());
        for (row, (&t, &a)) in targets.iter().zip(actions).enumerate() {
            let diff = q[[row, a]] - t;
            if !diff.is_finite() {
                return Err(Error::NonFiniteLoss { row });
            }
            loss += diff * diff;
            dq[[row, a]] = 2.0 * diff / b;
        }
        loss /= b;

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        let (mut dh, dw, db) = self.output.backward(&cache.last_hidden, &dq);
        let output_grads = [dw.into_raw_vec_and_offset().0, db.to_vec()];
        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            let mut dz = leaky_relu_backward(&bc.pre_activation, &dh, block.slope);
            let mut grads = Vec::with_capacity(4);
            let mut bn_grads = Vec::new();
            if let (Some(bn), Some(c)) = (&block.bn, &bc.bn) {
                let (dpre, dgamma, dbeta) = bn.backward(&dz, c);
                dz = dpre;
                bn_grads = vec![dgamma.to_vec(), dbeta.to_vec()];
            }
            let (dx, dw, db) = block.linear.backward(&bc.input, &dz);
            grads.push(dw.into_raw_vec_and_offset().0);
            grads.push(db.to_vec());
            grads.extend(bn_grads);
            block_grads.push(grads);
            dh = dx;
        }
        block_grads.reverse();

        let mut all = Vec::new();
        if let (Some(bn), Some(c)) = (&self.input_bn, &cache.input_bn) {
            let (_, dgamma, dbeta) = bn.backward(&dh, c);
            all.push(dgamma.to_vec());
            all.push(dbeta.to_vec());
        }
        all.extend(block_grads.into_iter().flatten());
        all.extend(output_grads);
        Ok((loss, all))
    }

    /// One optimisation step on the masked squared loss; returns the loss
    /// before the update.
    pub fn backward_and_step(
        &mut self,
        optimizer: &mut RAdam,
        batch: &Array2<f64>,
        targets: &[f64],
        actions: &[usize],
    ) -> Result<f64> {
        let (loss, grads) = self.loss_and_gradients(batch, targets, actions)?;
        optimizer.update(self.parameters_mut(), &grads);
        Ok(loss)
    }

    /// Trainable parameters in a fixed order: input batch-norm scale and
    /// shift, then per block weight, bias, scale, shift, then the output layer.
    pub fn parameters(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        fn s(a: &Array1<f64>) -> &[f64] {
            a.as_slice().expect("contiguous")
        }
        fn s2(a: &Array2<f64>) -> &[f64] {
            a.as_slice().expect("contiguous")
        }
        if let Some(bn) = &self.input_bn {
            out.push(s(&bn.gamma));
            out.push(s(&bn.beta));
        }
        for block in &self.blocks {
            out.push(s2(&block.linear.weight));
            out.push(s(&block.linear.bias));
            if let Some(bn) = &block.bn {
                out.push(s(&bn.gamma));
                out.push(s(&bn.beta));
            }
        }
        out.push(s2(&self.output.weight));
        out.push(s(&self.output.bias));
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(bn) = &mut self.input_bn {
            out.push(bn.gamma.as_slice_mut().expect("contiguous"));
            out.push(bn.beta.as_slice_mut().expect("contiguous"));
        }
        for block in &mut self.blocks {
            out.push(block.linear.weight.as_slice_mut().expect("contiguous"));
            out.push(block.linear.bias.as_slice_mut().expect("contiguous"));
            if let Some(bn) = &mut block.bn {
                out.push(bn.gamma.as_slice_mut().expect("contiguous"));
                out.push(bn.beta.as_slice_mut().expect("contiguous"));
            }
        }
        out.push(self.output.weight.as_slice_mut().expect("contiguous"));
        out.push(self.output.bias.as_slice_mut().expect("contiguous"));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Overwrites `dst` with a deep copy of these parameters, running
    /// statistics included.
    pub fn copy_into(&self, dst: &mut QNetwork) -> Result<()> {
        if self.spec != dst.spec {
            return Err(Error::ShapeMismatch("networks have different specs".into()));
        }
        dst.clone_from(self);
        Ok(())
    }

    /// Resets every batch-norm layer's running statistics.
    pub fn reset_running_stats(&mut self) {
        if let Some(bn) = &mut self.input_bn {
            bn.reset_running_stats();
        }
        for bn in self.blocks.iter_mut().filter_map(|b| b.bn.as_mut()) {
            bn.reset_running_stats();
        }
    }
}

/// Versioned JSON container for a network and, optionally, its optimiser.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub network: QNetwork,
    pub optimizer: Option<RAdam>,
}

impl Checkpoint {
    pub fn new(network: QNetwork, optimizer: Option<RAdam>) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            network,
            optimizer,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", ck.version)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&s)
    }
}
