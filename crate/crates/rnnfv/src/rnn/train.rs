use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backprop::backprop_trace;
use super::forward::{nll_from_trace, rnn_forward_impl};
use super::model::RnnModel;
use super::sequence::SequenceRef;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub gradient_clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            gradient_clip_norm: 5.0,
            seed: 0,
        }
    }
}

/// Model snapshot emitted after each epoch.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub epoch: usize,
    pub model: RnnModel,
    pub train_nll: f64,
    pub valid_nll: f64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Trains the model, emitting one checkpoint per epoch. Selection of a final
/// model is deliberately left to the caller (early stopping happens on a
/// downstream metric, not on the training loss).
///
/// The loss per batch is the mean over sequences of per-sequence total NLL,
/// plus an L2 weight-decay penalty that never appears in extracted gradients.
pub fn rnn_train(
    model: &RnnModel,
    train: &[SequenceRef<'_>],
    valid: &[SequenceRef<'_>],
    cfg: &TrainConfig,
    mut checkpoint_sink: impl FnMut(Checkpoint),
) -> Result<Vec<(usize, f64, f64)>> {
    if cfg.epochs == 0 {
        return Err(Error::Config("epochs must be >= 1".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if cfg.learning_rate <= 0.0 {
        return Err(Error::Config("learning_rate must be > 0".into()));
    }
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }

    let mut current = model.clone();
    let mut params = current.flatten();
    let mut m1 = vec![0.0; params.len()];
    let mut m2 = vec![0.0; params.len()];
    let mut step = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);

        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; params.len()];
            for &idx in batch {
                let trace = rnn_forward_impl(&current, train[idx], false, Some(&mut rng))?;
                let loss = nll_from_trace(&current, &trace);
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite loss at epoch {epoch}, sequence '{}'",
                        train[idx].id()
                    )));
                }
                let g = backprop_trace(&current, &trace);
                for (acc, gi) in grad.iter_mut().zip(&g.flat) {
                    *acc += gi;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for (gi, &w) in grad.iter_mut().zip(&params) {
                *gi = *gi * scale + cfg.weight_decay * w;
            }

            if cfg.gradient_clip_norm > 0.0 {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > cfg.gradient_clip_norm {
                    let s = cfg.gradient_clip_norm / norm;
                    for g in grad.iter_mut() {
                        *g *= s;
                    }
                }
            }

            step += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
            let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
            for k in 0..params.len() {
                m1[k] = ADAM_BETA1 * m1[k] + (1.0 - ADAM_BETA1) * grad[k];
                m2[k] = ADAM_BETA2 * m2[k] + (1.0 - ADAM_BETA2) * grad[k] * grad[k];
                let mhat = m1[k] / bc1;
                let vhat = m2[k] / bc2;
                params[k] -= cfg.learning_rate * mhat / (vhat.sqrt() + ADAM_EPS);
            }
            current.weights = current.unflatten(&params)?;
        }

        let train_nll = mean_nll(&current, train)?;
        let valid_nll = if valid.is_empty() { f64::NAN } else { mean_nll(&current, valid)? };
        curve.push((epoch, train_nll, valid_nll));
        checkpoint_sink(Checkpoint { epoch, model: current.clone(), train_nll, valid_nll });
    }

    Ok(curve)
}

fn mean_nll(model: &RnnModel, data: &[SequenceRef<'_>]) -> Result<f64> {
    let mut total = 0.0;
    for seq in data {
        let trace = rnn_forward_impl(model, *seq, true, None)?;
        total += nll_from_trace(model, &trace);
    }
    Ok(total / data.len() as f64)
}
