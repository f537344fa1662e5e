//! AdamW training with global-norm clipping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use lmxpairs_core::sequences::Sample;

use crate::{Model, ModelError};

const SHUFFLE_STREAM: u64 = 1 << 32;
const DROPOUT_STREAM: u64 = 1 << 33;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay, applied to weight matrices only.
    pub weight_decay: f64,
    pub clip_norm: f64,
}

impl Default for OptimConfig {
    fn default() -> OptimConfig {
        OptimConfig { lr: 6e-4, beta1: 0.9, beta2: 0.95, eps: 1e-8, weight_decay: 0.01, clip_norm: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
}

/// Model, optimizer moments and step counter. Batch order and dropout masks
/// are pure functions of the model seed and the step, so this is the whole
/// random state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub optim: OptimConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    decay: Vec<bool>,
}

impl TrainState {
    pub fn new(model: Model, optim: OptimConfig) -> TrainState {
        let n = model.num_params();
        TrainState::restore(model, optim, vec![0.0; n], vec![0.0; n], 0)
    }

    pub(crate) fn restore(model: Model, optim: OptimConfig, m: Vec<f64>, v: Vec<f64>, step: u64) -> TrainState {
        let mut decay = vec![false; model.num_params()];
        for r in model.layout().matrices() {
            decay[r].fill(true);
        }
        TrainState { model, optim, m, v, step, decay }
    }

    /// Mean masked cross-entropy over every loss-bearing position in the
    /// batch, then one optimizer step. Per-sample gradients may be computed
    /// in parallel; they are summed in batch order.
    pub fn train_step(&mut self, batch: &[Sample]) -> Result<StepReport, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let step = self.step + 1;
        let seed = self.model.config.seed;
        let dropout = self.model.config.dropout > 0.0;
        let model = &self.model;
        let grads: Vec<_> = batch
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = dropout.then(|| {
                    let mut r = ChaCha8Rng::seed_from_u64(seed);
                    r.set_stream(DROPOUT_STREAM + step);
                    r.set_word_pos((i as u128) << 40);
                    r
                });
                model.sample_gradient(s, rng.as_mut())
            })
            .collect::<Result<_, _>>()?;
        let count: usize = grads.iter().map(|g| g.count).sum();
        let nll: f64 = grads.iter().map(|g| g.nll).sum();
        let loss = nll / count as f64;
        if !loss.is_finite() {
            let ids: Vec<&str> = batch.iter().map(|s| s.id.as_str()).collect();
            return Err(ModelError::NonFinite { step, detail: format!("loss {loss} over {count} positions in samples {ids:?}") });
        }
        let mut grad = vec![0.0; self.model.num_params()];
        for g in &grads {
            grad.iter_mut().zip(&g.grad).for_each(|(a, b)| *a += b);
        }
        let scale = 1.0 / count as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !grad_norm.is_finite() {
            return Err(ModelError::NonFinite { step, detail: format!("gradient norm {grad_norm}") });
        }
        let clip = if grad_norm > self.optim.clip_norm { self.optim.clip_norm / grad_norm } else { 1.0 };
        self.adamw(&grad, clip, step);
        self.step = step;
        Ok(StepReport { step, loss, grad_norm })
    }

    fn adamw(&mut self, grad: &[f64], clip: f64, step: u64) {
        let o = &self.optim;
        let bc1 = 1.0 - o.beta1.powi(step as i32);
        let bc2 = 1.0 - o.beta2.powi(step as i32);
        let p = &mut self.model.params;
        for i in 0..p.len() {
            let g = grad[i] * clip;
            self.m[i] = o.beta1 * self.m[i] + (1.0 - o.beta1) * g;
            self.v[i] = o.beta2 * self.v[i] + (1.0 - o.beta2) * g * g;
            if self.decay[i] {
                p[i] -= o.lr * o.weight_decay * p[i];
            }
            p[i] -= o.lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + o.eps);
        }
    }

    /// Indices of the batch for the next step: epochs walk a permutation
    /// seeded by the model seed and the epoch number.
    pub fn next_batch(&self, n_samples: usize, batch_size: usize) -> Vec<usize> {
        let start = self.step as usize * batch_size;
        (start..start + batch_size.min(n_samples))
            .map(|k| {
                let (epoch, at) = (k / n_samples, k % n_samples);
                epoch_order(self.model.config.seed, epoch as u64, n_samples)[at]
            })
            .collect()
    }

    /// Runs `steps` steps over `samples`, calling `on_step` after each.
    pub fn train(
        &mut self,
        samples: &[Sample],
        steps: u64,
        batch_size: usize,
        mut on_step: impl FnMut(&StepReport),
    ) -> Result<Vec<StepReport>, ModelError> {
        if samples.is_empty() || batch_size == 0 {
            return Err(ModelError::EmptyBatch);
        }
        let mut log = Vec::with_capacity(steps as usize);
        for _ in 0..steps {
            let batch: Vec<Sample> = self.next_batch(samples.len(), batch_size).into_iter().map(|i| samples[i].clone()).collect();
            let r = self.train_step(&batch)?;
            on_step(&r);
            log.push(r);
        }
        Ok(log)
    }
}

fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SHUFFLE_STREAM + epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// `step,loss` lines with a header.
pub fn log_csv(log: &[StepReport]) -> String {
    let mut out = String::from("step,loss\n");
    for r in log {
        out.push_str(&format!("{},{}\n", r.step, r.loss));
    }
    out
}
