//! Adam training loop with the staircase learning-rate schedule.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{init_params, loss_and_grad, loss_weighted, NetworkParams, NetworkSpec};
use crate::error::{FwiError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr0")]
    pub lr0: f64,
    /// The learning rate is lr0 / decay_factor^floor(epoch / decay_every).
    #[serde(default = "default_decay_factor")]
    pub decay_factor: f64,
    #[serde(default = "default_decay_every")]
    pub decay_every: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr0() -> f64 {
    5e-4
}
fn default_decay_factor() -> f64 {
    1.2
}
fn default_decay_every() -> usize {
    5
}
fn default_batch() -> usize {
    128
}
fn default_epochs() -> usize {
    50
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 5e-4,
            decay_factor: 1.2,
            decay_every: 5,
            batch_size: 128,
            epochs: 50,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 / self.decay_factor.powi((epoch / self.decay_every) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) || self.batch_size == 0 || self.decay_every == 0 {
            return Err(FwiError::invalid("lr0 > 0, batch_size >= 1, decay_every >= 1 required"));
        }
        Ok(())
    }
}

/// Borrowed training matrices: one row per sample.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub inputs: &'a Array2<f64>,
    pub targets: &'a Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Sub-batch width for the data-parallel gradient. Fixed (independent of the
/// worker count) so the ordered reduction is bitwise identical no matter how
/// many threads run.
const GRAD_CHUNK: usize = 16;

fn batch_loss_and_grad(
    params: &NetworkParams,
    spec: &NetworkSpec,
    x: &Array2<f64>,
    t: &Array2<f64>,
    mu: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let b = x.nrows();
    let ranges: Vec<(usize, usize)> = (0..b)
        .step_by(GRAD_CHUNK)
        .map(|s| (s, (s + GRAD_CHUNK).min(b)))
        .collect();
    let parts: Vec<Result<(f64, Vec<f64>, usize)>> = ranges
        .par_iter()
        .map(|&(s, e)| {
            let xs = x.slice(ndarray::s![s..e, ..]).to_owned();
            let ts = t.slice(ndarray::s![s..e, ..]).to_owned();
            let (loss, grad) = loss_and_grad(params, spec, &xs, &ts, mu)?;
            Ok((loss, grad, e - s))
        })
        .collect();
    let mut total_grad = vec![0.0; params.layout.total];
    let mut total_loss = 0.0;
    for part in parts {
        let (loss, grad, count) = part?;
        let w = count as f64 / b as f64;
        total_loss += w * loss;
        super::axpy(&mut total_grad, w, &grad);
    }
    Ok((total_loss, total_grad))
}

fn evaluate_loss(
    params: &NetworkParams,
    spec: &NetworkSpec,
    data: &TrainData,
    mu: &[f64],
    batch: usize,
) -> Result<f64> {
    let n = data.inputs.nrows();
    if n == 0 {
        return Ok(f64::NAN);
    }
    let ranges: Vec<(usize, usize)> = (0..n)
        .step_by(batch)
        .map(|s| (s, (s + batch).min(n)))
        .collect();
    let parts: Vec<Result<(f64, usize)>> = ranges
        .par_iter()
        .map(|&(s, e)| {
            let xs = data.inputs.slice(ndarray::s![s..e, ..]).to_owned();
            let ts = data.targets.slice(ndarray::s![s..e, ..]).to_owned();
            let loss = loss_weighted(params, spec, &xs, &ts, mu)?;
            Ok((loss, e - s))
        })
        .collect();
    let mut total = 0.0;
    for part in parts {
        let (loss, count) = part?;
        total += loss * count as f64 / n as f64;
    }
    Ok(total)
}

/// Train a fresh network on `train_data`, reporting per-epoch train and
/// validation losses. Deterministic for a fixed seed, independent of the
/// rayon worker count.
pub fn train(
    spec: &NetworkSpec,
    config: &TrainConfig,
    train_data: TrainData,
    val_data: Option<TrainData>,
) -> Result<(NetworkParams, Vec<EpochStats>)> {
    config.validate()?;
    spec.validate()?;
    let n = train_data.inputs.nrows();
    if n == 0 {
        return Err(FwiError::invalid("training set is empty"));
    }
    let mu = spec.feature.mu.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = init_params(spec, &mut rng)?;
    let mut adam_m = vec![0.0; params.layout.total];
    let mut adam_v = vec![0.0; params.layout.total];
    let mut step = 0usize;
    let mut history = Vec::with_capacity(config.epochs);

    let mut indices: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        let lr = config.learning_rate(epoch);
        // deterministic shuffle per epoch
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for (batch_id, chunk) in indices.chunks(config.batch_size).enumerate() {
            let x = gather_rows(train_data.inputs, chunk);
            let t = gather_rows(train_data.targets, chunk);
            let (loss, grad) = batch_loss_and_grad(&params, spec, &x, &t, &mu)?;
            if !loss.is_finite() {
                return Err(FwiError::NanLoss {
                    epoch,
                    batch: batch_id,
                });
            }
            epoch_loss += loss * chunk.len() as f64 / n as f64;
            step += 1;
            let b1t = 1.0 - config.beta1.powi(step as i32);
            let b2t = 1.0 - config.beta2.powi(step as i32);
            for i in 0..params.data.len() {
                let g = grad[i];
                adam_m[i] = config.beta1 * adam_m[i] + (1.0 - config.beta1) * g;
                adam_v[i] = config.beta2 * adam_v[i] + (1.0 - config.beta2) * g * g;
                let m_hat = adam_m[i] / b1t;
                let v_hat = adam_v[i] / b2t;
                params.data[i] -= lr * m_hat / (v_hat.sqrt() + config.eps);
            }
        }
        let val_loss = match &val_data {
            Some(v) => Some(evaluate_loss(&params, spec, v, &mu, config.batch_size)?),
            None => None,
        };
        history.push(EpochStats {
            epoch,
            learning_rate: lr,
            train_loss: epoch_loss,
            val_loss,
        });
    }
    Ok((params, history))
}

fn gather_rows(src: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), src.ncols()));
    for (r, &idx) in rows.iter().enumerate() {
        out.row_mut(r).assign(&src.row(idx));
    }
    out
}
