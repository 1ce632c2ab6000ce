//! Fully connected regressor trained with Adam on mean squared error.
//!
//! Inputs and the target are standardised with training statistics. After
//! training every weight is rounded to single precision so that a model read
//! back from its 4-byte encoding predicts bit-identically.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Activation, Standardizer};
use crate::error::{Error, Result};
use crate::seeded_rng;

/// Training knobs. Defaults: batch 32, learning rate 1e-3, up to 500 epochs,
/// early stop after 20 epochs without validation improvement, validation on
/// the last 10% of the training rows.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpTrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for MlpTrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-3,
            max_epochs: 500,
            patience: 20,
            validation_fraction: 0.1,
        }
    }
}

impl MlpTrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0
            || !(self.learning_rate > 0.0 && self.learning_rate.is_finite())
            || self.max_epochs == 0
            || !(0.0..1.0).contains(&self.validation_fraction)
        {
            return Err(Error::InvalidConfig(format!("invalid MLP training config {self:?}")));
        }
        Ok(())
    }
}

/// Layer sizes plus a flat parameter vector. Layer `l` stores its weights
/// row-major (`out x in`) followed by its biases. The output unit is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

impl Network {
    /// All-zero parameters.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidHyperparams(format!("bad layer sizes {sizes:?}")));
        }
        let count = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            params: vec![0.0; count],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation)?;
        let mut rng = seeded_rng(seed, 0);
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.random_range(-limit..limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::FeatureLengthMismatch {
                expected: self.params.len(),
                actual: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let mut offset = 0;
        let last = self.sizes.len() - 2;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            next.clear();
            for (row, b) in weights.chunks_exact(n_in).zip(biases) {
                let z = b + row.iter().zip(&cur).map(|(a, c)| a * c).sum::<f64>();
                next.push(if l == last { z } else { self.activation.apply(z) });
            }
            std::mem::swap(&mut cur, &mut next);
            offset += n_in * n_out + n_out;
        }
        cur[0]
    }

    /// Mean squared error over the rows of `x` and its gradient.
    pub fn loss_and_gradient(&self, x: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate(x, y, &mut grad);
        (loss, grad)
    }

    pub fn loss(&self, x: &[f64], y: &[f64]) -> f64 {
        let n_in = self.sizes[0];
        x.chunks_exact(n_in)
            .zip(y)
            .map(|(row, t)| (self.forward(row) - t).powi(2))
            .sum::<f64>()
            / y.len() as f64
    }

    fn accumulate(&self, x: &[f64], y: &[f64], grad: &mut [f64]) -> f64 {
        let n_layers = self.sizes.len() - 1;
        let offsets: Vec<usize> = self
            .sizes
            .windows(2)
            .scan(0, |acc, w| {
                let o = *acc;
                *acc += w[0] * w[1] + w[1];
                Some(o)
            })
            .collect();
        let mut acts: Vec<Vec<f64>> = self.sizes.iter().map(|&s| vec![0.0; s]).collect();
        let mut delta: Vec<Vec<f64>> = self.sizes[1..].iter().map(|&s| vec![0.0; s]).collect();
        let scale = 2.0 / y.len() as f64;
        let mut loss = 0.0;
        for (row, &target) in x.chunks_exact(self.sizes[0]).zip(y) {
            acts[0].copy_from_slice(row);
            for l in 0..n_layers {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let o = offsets[l];
                let (before, after) = acts.split_at_mut(l + 1);
                let input = &before[l];
                let out = &mut after[0];
                for (j, slot) in out.iter_mut().enumerate() {
                    let w = &self.params[o + j * n_in..o + (j + 1) * n_in];
                    let z = self.params[o + n_in * n_out + j] + w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                    *slot = if l + 1 == n_layers { z } else { self.activation.apply(z) };
                }
            }
            let err = acts[n_layers][0] - target;
            loss += err * err;
            delta[n_layers - 1][0] = scale * err;
            for l in (0..n_layers).rev() {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let o = offsets[l];
                for j in 0..n_out {
                    let d = delta[l][j];
                    let g = &mut grad[o + j * n_in..o + (j + 1) * n_in];
                    for (gi, a) in g.iter_mut().zip(&acts[l]) {
                        *gi += d * a;
                    }
                    grad[o + n_in * n_out + j] += d;
                }
                if l > 0 {
                    let (lower, upper) = delta.split_at_mut(l);
                    let below = &mut lower[l - 1];
                    let d_out = &upper[0];
                    for i in 0..n_in {
                        let back: f64 = (0..n_out).map(|j| self.params[o + j * n_in + i] * d_out[j]).sum();
                        below[i] = back * self.activation.derivative_from_output(acts[l][i]);
                    }
                }
            }
        }
        loss / y.len() as f64
    }
}

/// A trained network with its input and target scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub(crate) network: Network,
    pub(crate) scaler: Standardizer,
    pub(crate) y_mean: f64,
    pub(crate) y_scale: f64,
}

impl MlpModel {
    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.network.forward(&self.scaler.transform(x)) * self.y_scale + self.y_mean
    }

    pub(crate) fn fit(
        matrix: &[f64],
        labels: &[f64],
        n_features: usize,
        hidden: &[usize],
        activation: Activation,
        cfg: &MlpTrainingConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let scaler = Standardizer::fit(matrix, n_features);
        let y_scaler = Standardizer::fit(labels, 1);
        let (y_mean, y_scale) = (y_scaler.mean[0], y_scaler.scale[0]);
        let mut x = vec![0.0; matrix.len()];
        for (row, out) in matrix.chunks_exact(n_features).zip(x.chunks_exact_mut(n_features)) {
            scaler.transform_into(row, out);
        }
        let y: Vec<f64> = labels.iter().map(|v| (v - y_mean) / y_scale).collect();

        let m = labels.len();
        let n_val = ((m as f64) * cfg.validation_fraction).floor() as usize;
        let n_val = if m - n_val < 1 { 0 } else { n_val };
        let n_fit = m - n_val;
        let (x_fit, x_val) = x.split_at(n_fit * n_features);
        let (y_fit, y_val) = y.split_at(n_fit);

        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(n_features);
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut net = Network::glorot(&sizes, activation, seed)?;
        let mut adam = Adam::new(net.params.len(), cfg.learning_rate);
        let mut rng = seeded_rng(seed, 1);
        let mut order: Vec<usize> = (0..n_fit).collect();
        let mut batch_x = Vec::with_capacity(cfg.batch_size * n_features);
        let mut batch_y = Vec::with_capacity(cfg.batch_size);
        let mut grad = vec![0.0; net.params.len()];

        let mut best_params = net.params.clone();
        let mut best_loss = f64::INFINITY;
        let mut stale = 0;
        for epoch in 0..cfg.max_epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                batch_x.clear();
                batch_y.clear();
                for &i in chunk {
                    batch_x.extend_from_slice(&x_fit[i * n_features..(i + 1) * n_features]);
                    batch_y.push(y_fit[i]);
                }
                grad.iter_mut().for_each(|g| *g = 0.0);
                let loss = net.accumulate(&batch_x, &batch_y, &mut grad);
                if !loss.is_finite() {
                    return Err(Error::DivergedLoss { epoch });
                }
                adam.step(&mut net.params, &grad);
            }
            let monitor = if n_val > 0 {
                net.loss(x_val, y_val)
            } else {
                net.loss(x_fit, y_fit)
            };
            if !monitor.is_finite() {
                return Err(Error::DivergedLoss { epoch });
            }
            if monitor < best_loss {
                best_loss = monitor;
                best_params.copy_from_slice(&net.params);
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    log::debug!("early stop at epoch {epoch}, best loss {best_loss:.5}");
                    break;
                }
            }
        }
        for p in &mut best_params {
            *p = f64::from(*p as f32);
        }
        net.params = best_params;
        Ok(Self {
            network: net,
            scaler,
            y_mean,
            y_scale,
        })
    }
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}
