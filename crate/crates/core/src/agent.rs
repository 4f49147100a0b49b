//! Action selection and Q-learning updates.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{extend_state, StateVector};
use crate::error::{Error, Result};
use crate::neuralnet::{QNetwork, RAdam};

#[derive(Clone, Debug, PartialEq)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: i32,
    pub next_state: Vec<f64>,
}

/// FIFO store of the most recent `capacity` experiences.
#[derive(Clone, Debug)]
pub struct ReplayMemory {
    capacity: usize,
    buffer: VecDeque<Experience>,
    pushes: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayMemory {
            capacity,
            buffer: VecDeque::with_capacity(capacity.min(1 << 16)),
            pushes: 0,
        }
    }

    pub fn push(&mut self, e: Experience) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(e);
        self.pushes += 1;
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total experiences ever pushed.
    pub fn pushes(&self) -> u64 {
        self.pushes
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.buffer.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<&Experience> {
        (0..count)
            .map(|_| &self.buffer[rng.random_range(0..self.buffer.len())])
            .collect()
    }
}

/// `end + (start - end) * exp(-k / delta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpSchedule {
    pub start: f64,
    pub end: f64,
    pub delta: f64,
}

impl ExpSchedule {
    pub fn new(start: f64, end: f64, delta: f64) -> Self {
        ExpSchedule { start, end, delta }
    }

    pub fn constant(value: f64) -> Self {
        ExpSchedule {
            start: value,
            end: value,
            delta: 1.0,
        }
    }

    pub fn value(&self, k_total: u64) -> f64 {
        if self.start == self.end {
            return self.start;
        }
        self.end + (self.start - self.end) * (-(k_total as f64) / self.delta).exp()
    }
}

/// Fusion weight schedule with its step counter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionSchedule {
    pub lambda: ExpSchedule,
    pub k_total: u64,
}

impl FusionSchedule {
    pub fn new(lambda: ExpSchedule) -> Self {
        FusionSchedule { lambda, k_total: 0 }
    }

    pub fn current(&self) -> f64 {
        self.lambda.value(self.k_total)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Uniform over the `item_count` flip actions.
pub fn select_action_random<R: Rng + ?Sized>(item_count: usize, rng: &mut R) -> usize {
    rng.random_range(0..item_count)
}

/// Epsilon-greedy over the network's Q-values; the random branch picks a flip.
pub fn select_action_basic<R: Rng + ?Sized>(
    net: &QNetwork,
    state: &StateVector,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if rng.random::<f64>() < epsilon {
        return Ok(select_action_random(state.item_count, rng));
    }
    Ok(argmax(&net.predict_one(&state.values)?))
}

/// Epsilon-greedy over `lambda * s' + (1 - lambda) * q`; advances the schedule.
pub fn select_action_fusion<R: Rng + ?Sized>(
    net: &QNetwork,
    state: &StateVector,
    schedule: &mut FusionSchedule,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    let lambda = schedule.current();
    schedule.k_total += 1;
    if rng.random::<f64>() < epsilon {
        return Ok(select_action_random(state.item_count, rng));
    }
    let extended = extend_state(state);
    let q = net.predict_one(&state.values)?;
    if q.len() != extended.len() {
        return Err(Error::ShapeMismatch(format!(
            "extended state has {} entries, network outputs {}",
            extended.len(),
            q.len()
        )));
    }
    let fused: Vec<f64> = extended
        .iter()
        .zip(&q)
        .map(|(s, q)| lambda * s + (1.0 - lambda) * q)
        .collect();
    Ok(argmax(&fused))
}

/// Flip the item with the highest state value, or a random flip with
/// probability `epsilon`.
pub fn select_action_state_eps<R: Rng + ?Sized>(values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < epsilon {
        return select_action_random(values.len(), rng);
    }
    argmax(values)
}

/// Flip item `m` with probability proportional to its state value; uniform
/// when every value is zero.
pub fn select_action_state_prob<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> usize {
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return select_action_random(values.len(), rng);
    }
    let mut u = rng.random::<f64>() * total;
    let mut last_positive = 0;
    for (i, &v) in values.iter().enumerate() {
        if v <= 0.0 {
            continue;
        }
        if u < v {
            return i;
        }
        u -= v;
        last_positive = i;
    }
    last_positive
}

/// One update of `net` on a minibatch sampled from `memory`, bootstrapping
/// from `target`. Returns `None` while the memory holds fewer than
/// `batch_size` experiences.
pub fn train_step<R: Rng + ?Sized>(
    net: &mut QNetwork,
    target: &QNetwork,
    memory: &ReplayMemory,
    optimizer: &mut RAdam,
    gamma: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<Option<f64>> {
    if memory.len() < batch_size {
        return Ok(None);
    }
    let batch = memory.sample(batch_size, rng);
    let width = batch[0].state.len();
    let mut states = Array2::zeros((batch_size, width));
    let mut next_states = Array2::zeros((batch_size, width));
    for (r, e) in batch.iter().enumerate() {
        states.row_mut(r).assign(&ndarray::ArrayView1::from(&e.state));
        next_states.row_mut(r).assign(&ndarray::ArrayView1::from(&e.next_state));
    }
    let next_q = target.predict(&next_states)?;
    let targets: Vec<f64> = batch
        .iter()
        .zip(next_q.rows())
        .map(|(e, q)| e.reward as f64 + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let actions: Vec<usize> = batch.iter().map(|e| e.action).collect();
    net.backward_and_step(optimizer, &states, &targets, &actions).map(Some)
}
