//! Two-layer ReLU network (no biases, scalar output) trained with
//! mini-batch gradient descent on the logistic loss over ±1 labels.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{signed_label, PredictorModel, TrainError};
use crate::data::LabeledDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReluNetConfig {
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ReluNetConfig {
    fn default() -> Self {
        ReluNetConfig {
            hidden_units: 1000,
            learning_rate: 0.01,
            epochs: 30,
            seed: 0,
        }
    }
}

const BATCH_SIZE: usize = 32;

/// Raw network parameters: `w1` is row-major `hidden x dim`, `w2` has
/// length `hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluParams {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub hidden: usize,
    pub dim: usize,
}

pub(super) fn forward(w1: &[f64], w2: &[f64], hidden: usize, dim: usize, x: &[f64]) -> f64 {
    let mut out = 0.0;
    for k in 0..hidden {
        let row = &w1[k * dim..(k + 1) * dim];
        let pre: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
        if pre > 0.0 {
            out += w2[k] * pre;
        }
    }
    out
}

impl ReluParams {
    pub fn score(&self, x: &[f64]) -> f64 {
        forward(&self.w1, &self.w2, self.hidden, self.dim, x)
    }
}

/// Mean logistic loss over a batch and its gradient with respect to all
/// parameters. Exposed so the analytic gradient can be checked against
/// finite differences.
pub fn loss_and_grad(
    params: &ReluParams,
    batch: &[(&[f64], u8)],
) -> (f64, Vec<f64>, Vec<f64>) {
    let (hidden, dim) = (params.hidden, params.dim);
    let mut grad_w1 = vec![0.0; hidden * dim];
    let mut grad_w2 = vec![0.0; hidden];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;

    let mut activ = vec![0.0; hidden];
    for &(x, label) in batch {
        let y = signed_label(label);
        let mut score = 0.0;
        for k in 0..hidden {
            let row = &params.w1[k * dim..(k + 1) * dim];
            let pre: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
            let a = if pre > 0.0 { pre } else { 0.0 };
            activ[k] = a;
            score += params.w2[k] * a;
        }
        // ln(1 + exp(-y s)) computed stably
        let m = -y * score;
        loss += scale * if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
        // dL/ds = -y * sigmoid(-y s)
        let g = scale * (-y) / (1.0 + (y * score).exp());
        for k in 0..hidden {
            if activ[k] > 0.0 {
                grad_w2[k] += g * activ[k];
                let gk = g * params.w2[k];
                let row = &mut grad_w1[k * dim..(k + 1) * dim];
                for (slot, xi) in row.iter_mut().zip(x) {
                    *slot += gk * xi;
                }
            }
        }
    }
    (loss, grad_w1, grad_w2)
}

pub fn train_relu_net(
    train: &LabeledDataset,
    cfg: &ReluNetConfig,
) -> Result<PredictorModel, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let dim = train.dim();
    let hidden = cfg.hidden_units;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let bound1 = 1.0 / (dim as f64).sqrt();
    let bound2 = 1.0 / (hidden as f64).sqrt();
    let mut params = ReluParams {
        w1: (0..hidden * dim).map(|_| rng.gen_range(-bound1..bound1)).collect(),
        w2: (0..hidden).map(|_| rng.gen_range(-bound2..bound2)).collect(),
        hidden,
        dim,
    };

    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(BATCH_SIZE) {
            let batch: Vec<(&[f64], u8)> = chunk
                .iter()
                .map(|&i| (train.examples[i].features.as_slice(), train.examples[i].label))
                .collect();
            let (loss, g1, g2) = loss_and_grad(&params, &batch);
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss);
            }
            for (w, g) in params.w1.iter_mut().zip(&g1) {
                *w -= cfg.learning_rate * g;
            }
            for (w, g) in params.w2.iter_mut().zip(&g2) {
                *w -= cfg.learning_rate * g;
            }
        }
    }

    Ok(PredictorModel::ReluNet {
        w1: params.w1,
        w2: params.w2,
        hidden,
        dim,
    })
}
