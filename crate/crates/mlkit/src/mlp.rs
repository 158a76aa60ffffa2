// SPDX-License-Identifier: Apache-2.0

//! One-hidden-layer perceptron regressor (tanh hidden units, linear output)
//! trained with Adam on an L2-regularized squared loss.
//!
//! Targets are standardized internally. The step size starts at
//! `learning_rate_init` and is halved whenever the held-out loss fails to
//! improve for `patience` epochs; training stops once it falls below
//! `min_learning_rate`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::matrix::{check_xy, Matrix};
use crate::seeds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: usize,
    pub learning_rate_init: f64,
    pub max_epochs: usize,
    /// L2 penalty on weights (biases are not penalized).
    pub alpha: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub min_learning_rate: f64,
    pub validation_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: 23,
            learning_rate_init: 0.1,
            max_epochs: 200,
            alpha: 1e-4,
            batch_size: 200,
            patience: 10,
            min_learning_rate: 1e-5,
            validation_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    n_in: usize,
    hidden: usize,
    /// Flattened parameters: w1 (hidden x n_in), b1 (hidden), w2 (hidden), b2.
    params: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    pub epochs_run: usize,
}

impl Mlp {
    fn new(n_in: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = seeds::rng(seed);
        let mut params = Vec::with_capacity(hidden * n_in + 2 * hidden + 1);
        let b1 = (6.0 / (n_in + hidden) as f64).sqrt();
        for _ in 0..hidden * n_in + hidden {
            params.push(rng.random_range(-b1..b1));
        }
        let b2 = (6.0 / (hidden + 1) as f64).sqrt();
        for _ in 0..hidden + 1 {
            params.push(rng.random_range(-b2..b2));
        }
        Mlp { n_in, hidden, params, y_mean: 0.0, y_scale: 1.0, epochs_run: 0 }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, p: &[f64]) {
        self.params.copy_from_slice(p);
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let w1 = 0;
        let b1 = self.hidden * self.n_in;
        let w2 = b1 + self.hidden;
        (w1, b1, w2)
    }

    /// Network output in standardized target units.
    fn raw(&self, row: &[f64], h: &mut [f64]) -> f64 {
        let (_, b1, w2) = self.offsets();
        let p = &self.params;
        let mut out = p[p.len() - 1];
        for k in 0..self.hidden {
            let w = &p[k * self.n_in..(k + 1) * self.n_in];
            let a = p[b1 + k] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            h[k] = a.tanh();
            out += p[w2 + k] * h[k];
        }
        out
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        self.y_mean + self.y_scale * self.raw(row, &mut h)
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden];
        (0..x.rows()).map(|i| self.y_mean + self.y_scale * self.raw(x.row(i), &mut h)).collect()
    }

    /// Mean penalized loss over `rows` and its gradient with respect to the
    /// flattened parameters. `y` is in standardized units.
    pub fn loss_and_gradient(&self, x: &Matrix, y: &[f64], rows: &[usize], alpha: f64) -> (f64, Vec<f64>) {
        let (_, b1, w2) = self.offsets();
        let p = &self.params;
        let mut grad = vec![0.0; p.len()];
        let mut h = vec![0.0; self.hidden];
        let m = rows.len() as f64;
        let mut loss = 0.0;
        let last = p.len() - 1;
        for &i in rows {
            let row = x.row(i);
            let out = self.raw(row, &mut h);
            let err = out - y[i];
            loss += 0.5 * err * err;
            grad[last] += err;
            for k in 0..self.hidden {
                grad[w2 + k] += err * h[k];
                let delta = err * p[w2 + k] * (1.0 - h[k] * h[k]);
                grad[b1 + k] += delta;
                let g = &mut grad[k * self.n_in..(k + 1) * self.n_in];
                for (gj, xj) in g.iter_mut().zip(row) {
                    *gj += delta * xj;
                }
            }
        }
        let mut penalty = 0.0;
        for j in (0..b1).chain(w2..last) {
            penalty += p[j] * p[j];
        }
        loss = loss / m + 0.5 * alpha * penalty / m;
        for g in grad.iter_mut() {
            *g /= m;
        }
        for j in (0..b1).chain(w2..last) {
            grad[j] += alpha * p[j] / m;
        }
        (loss, grad)
    }
}

pub fn fit_mlp(x: &Matrix, y: &[f64], params: &MlpParams) -> Result<Mlp> {
    check_xy(x, y, 1)?;
    let m = x.rows();
    let mut net = Mlp::new(x.cols(), params.hidden.max(1), params.seed);
    let mean = y.iter().sum::<f64>() / m as f64;
    let sd = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64).sqrt();
    net.y_mean = mean;
    net.y_scale = if sd > 1e-12 { sd } else { 1.0 };
    let ys: Vec<f64> = y.iter().map(|v| (v - net.y_mean) / net.y_scale).collect();
    if params.max_epochs == 0 {
        return Ok(net);
    }

    let mut rng = seeds::rng(seeds::child(params.seed, 1));
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut rng);
    let n_val = if m >= 20 { ((m as f64) * params.validation_fraction).round() as usize } else { 0 };
    let (val, train) = idx.split_at(n_val);
    let mut train = train.to_vec();
    let val = val.to_vec();

    let np = net.n_params();
    let mut m1 = vec![0.0; np];
    let mut m2 = vec![0.0; np];
    let mut step = 0i32;
    let mut lr = params.learning_rate_init;
    let mut best_loss = f64::INFINITY;
    let mut best_params = net.params.clone();
    let mut stale = 0usize;
    let batch = params.batch_size.max(1);

    for epoch in 0..params.max_epochs {
        train.shuffle(&mut rng);
        for chunk in train.chunks(batch) {
            let (loss, grad) = net.loss_and_gradient(x, &ys, chunk, params.alpha);
            if !loss.is_finite() {
                return Err(MlError::Diverged(format!("mlp loss became {loss} at epoch {epoch}")));
            }
            step += 1;
            let c1 = 1.0 - params.beta1.powi(step);
            let c2 = 1.0 - params.beta2.powi(step);
            for j in 0..np {
                m1[j] = params.beta1 * m1[j] + (1.0 - params.beta1) * grad[j];
                m2[j] = params.beta2 * m2[j] + (1.0 - params.beta2) * grad[j] * grad[j];
                net.params[j] -= lr * (m1[j] / c1) / ((m2[j] / c2).sqrt() + params.epsilon);
            }
        }
        net.epochs_run = epoch + 1;
        let monitor: &[usize] = if val.is_empty() { &train } else { &val };
        let (loss, _) = net.loss_and_gradient(x, &ys, monitor, 0.0);
        if !loss.is_finite() {
            return Err(MlError::Diverged(format!("mlp validation loss became {loss} at epoch {epoch}")));
        }
        if loss < best_loss - 1e-4 * best_loss.abs().min(1.0) {
            best_loss = loss;
            best_params.copy_from_slice(&net.params);
            stale = 0;
        } else {
            stale += 1;
            if stale >= params.patience {
                lr *= 0.5;
                stale = 0;
                if lr < params.min_learning_rate {
                    break;
                }
            }
        }
    }
    if best_loss.is_finite() {
        net.params = best_params;
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_epochs_returns_initial_network() {
        let x = Matrix::from_rows(&[[0.1, 0.2], [0.3, -0.4], [1.0, 0.0]]).unwrap();
        let y = [1.0, 2.0, 3.0];
        let p = MlpParams { max_epochs: 0, seed: 5, ..Default::default() };
        let a = fit_mlp(&x, &y, &p).unwrap();
        let b = fit_mlp(&x, &y, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.epochs_run, 0);
        let init = Mlp::new(2, 23, 5);
        assert_eq!(a.params(), init.params());
    }
}
