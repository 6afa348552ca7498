use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::Tensor;
use super::model::DenoiserModel;
use super::{grid_to_input, TrainingPair};
use crate::bridge::{forward_sample, training_target, BridgeSchedule, Noise};
use crate::error::{Error, Result};
use crate::grid::VoxelGrid;
use crate::rng;

/// Produces `(x_t, target)` for one training example.
pub trait Objective {
    /// Number of diffusion steps `T`.
    fn steps(&self) -> usize;
    fn example(
        &self,
        pair: &TrainingPair,
        t: usize,
        noise_seed: u64,
    ) -> Result<(VoxelGrid, VoxelGrid)>;
}

/// Bridge regression target `α_t (S_c - x_0) + √δ_t ε`.
pub struct BridgeObjective<'a>(pub &'a BridgeSchedule);

impl Objective for BridgeObjective<'_> {
    fn steps(&self) -> usize {
        self.0.steps()
    }

    fn example(
        &self,
        pair: &TrainingPair,
        t: usize,
        noise_seed: u64,
    ) -> Result<(VoxelGrid, VoxelGrid)> {
        let noise = Noise::Seed(noise_seed);
        Ok((
            forward_sample(self.0, &pair.x0, &pair.s_c, t, noise)?,
            training_target(self.0, &pair.x0, &pair.s_c, t, noise)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub ema_rate: f64,
    pub batch_size: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_min_delta: f64,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            ema_rate: 0.995,
            batch_size: 2,
            plateau_factor: 0.5,
            plateau_patience: 5,
            plateau_min_delta: 1e-4,
            seed: 0,
        }
    }
}

/// Mutable optimisation state; everything needed to resume bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub step: u64,
    pub epoch: u64,
    pub lr: f64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub ema: Vec<Vec<f32>>,
    pub best_val: Option<f64>,
    pub bad_epochs: usize,
}

impl TrainerState {
    pub fn new(model: &DenoiserModel<f32>, config: &TrainerConfig) -> Self {
        TrainerState {
            step: 0,
            epoch: 0,
            lr: config.lr,
            m: model.zero_grads(),
            v: model.zero_grads(),
            ema: model.params.clone(),
            best_val: None,
            bad_epochs: 0,
        }
    }

    pub fn ema_model(&self, model: &DenoiserModel<f32>) -> Result<DenoiserModel<f32>> {
        DenoiserModel::from_params(model.config().clone(), self.ema.clone())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: u64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
    pub rows: Vec<LogRow>,
}

pub const LOG_HEADER: &str = "step,loss,lr";

/// Append rows to a CSV log, writing the header when the file is new.
pub fn append_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut s = String::new();
    if fresh {
        s.push_str(LOG_HEADER);
        s.push('\n');
    }
    for r in rows {
        s.push_str(&format!("{},{:?},{:?}\n", r.step, r.loss, r.lr));
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Mean absolute error of one example and its gradient, scaled by `weight`.
fn l1_with_grad(y: &Tensor<f32>, target: &VoxelGrid, weight: f64) -> (f64, Tensor<f32>) {
    let n = y.data.len() as f64;
    let g = (weight / n) as f32;
    let mut loss = 0.0;
    let mut dy = Tensor::zeros(1, y.dims);
    for (i, (&a, &b)) in y.data.iter().zip(target.data()).enumerate() {
        let r = a - b;
        loss += (r as f64).abs();
        dy.data[i] = if r > 0.0 {
            g
        } else if r < 0.0 {
            -g
        } else {
            0.0
        };
    }
    (loss / n, dy)
}

fn sample_t(rng: &mut impl Rng, steps: usize) -> usize {
    rng.random_range(1..=steps)
}

/// Optimisation loop over paired examples.
pub struct Trainer<'a> {
    pub config: TrainerConfig,
    pub objective: &'a dyn Objective,
}

impl Trainer<'_> {
    /// One optimisation step on `batch`; returns the mean L1 loss. A
    /// non-finite loss leaves model and state untouched.
    pub fn step(
        &self,
        model: &mut DenoiserModel<f32>,
        state: &mut TrainerState,
        batch: &[&TrainingPair],
    ) -> Result<f64> {
        let cfg = &self.config;
        let step_seed = rng::derive_seed(cfg.seed, state.step);
        let mut r = rng::stream(step_seed, 0);
        let mut grads = model.zero_grads();
        let weight = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for (i, pair) in batch.iter().enumerate() {
            let t = sample_t(&mut r, self.objective.steps());
            let (x_t, target) =
                self.objective
                    .example(pair, t, rng::derive_seed(step_seed, 1 + i as u64))?;
            let input = grid_to_input(&x_t, &pair.cond, model.config().in_channels)?;
            let (y, cache) = model.forward_train(&input, t as f64)?;
            let (l, dy) = l1_with_grad(&y, &target, weight);
            loss += l * weight;
            model.backward(&cache, &dy, &mut grads);
        }
        if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "loss {loss} at step {}",
                state.step
            )));
        }
        state.step += 1;
        let t = state.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let lr = state.lr;
        let ema = cfg.ema_rate as f32;
        for (k, g) in grads.iter().enumerate() {
            let (p, m, v, e) = (
                &mut model.params[k],
                &mut state.m[k],
                &mut state.v[k],
                &mut state.ema[k],
            );
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] as f64 / bc1;
                let vh = v[i] as f64 / bc2;
                p[i] -= (lr * mh / (vh.sqrt() + cfg.adam_eps)) as f32;
                e[i] = ema * e[i] + (1.0 - ema) * p[i];
            }
        }
        Ok(loss)
    }

    /// Deterministic loss on held-out pairs: fixed `t` and noise per item.
    pub fn validation_loss(
        &self,
        model: &DenoiserModel<f32>,
        data: &[TrainingPair],
    ) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("empty validation set".into()));
        }
        let mut total = 0.0;
        for (j, pair) in data.iter().enumerate() {
            let seed = rng::derive_seed(self.config.seed ^ 0x7A11_DA7E, j as u64);
            let t = sample_t(&mut rng::stream(seed, 0), self.objective.steps());
            let (x_t, target) = self.objective.example(pair, t, rng::derive_seed(seed, 1))?;
            let input = grid_to_input(&x_t, &pair.cond, model.config().in_channels)?;
            let y = model.forward(&input, t as f64)?;
            total += l1_with_grad(&y, &target, 1.0).0;
        }
        Ok(total / data.len() as f64)
    }

    /// Shuffled batches of one epoch, a function of `(seed, epoch)` only.
    pub fn epoch_batches(&self, n: usize, epoch: u64) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(
            rng::derive_seed(self.config.seed, epoch),
            0x5EED,
        ));
        order
            .chunks(self.config.batch_size.max(1))
            .map(|c| c.to_vec())
            .collect()
    }

    /// Train one epoch, then update the plateau scheduler from validation.
    pub fn train_epoch(
        &self,
        model: &mut DenoiserModel<f32>,
        state: &mut TrainerState,
        train: &[TrainingPair],
        val: &[TrainingPair],
    ) -> Result<EpochReport> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let geometry = train[0].x0.geometry();
        for p in train.iter().chain(val) {
            geometry.ensure_same(p.x0.geometry())?;
        }
        let mut rows = Vec::new();
        for batch in self.epoch_batches(train.len(), state.epoch) {
            let items: Vec<&TrainingPair> = batch.iter().map(|&i| &train[i]).collect();
            let lr = state.lr;
            let loss = self.step(model, state, &items)?;
            rows.push(LogRow {
                step: state.step,
                loss,
                lr,
            });
        }
        let train_loss = rows.iter().map(|r| r.loss).sum::<f64>() / rows.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(self.validation_loss(model, val)?)
        };
        let monitored = val_loss.unwrap_or(train_loss);
        match state.best_val {
            Some(best) if monitored > best - self.config.plateau_min_delta => {
                state.bad_epochs += 1;
                if state.bad_epochs >= self.config.plateau_patience {
                    state.lr *= self.config.plateau_factor;
                    state.bad_epochs = 0;
                }
            }
            _ => {
                state.best_val = Some(monitored);
                state.bad_epochs = 0;
            }
        }
        state.epoch += 1;
        Ok(EpochReport {
            epoch: state.epoch,
            train_loss,
            val_loss,
            lr: state.lr,
            rows,
        })
    }
}
