// SPDX-License-Identifier: Apache-2.0

//! Two-component Gaussian mixture on raw 1-D samples, fitted by EM with
//! k-means++ seeding and several restarts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::seeds;

pub const MIN_GMM_SAMPLES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Components narrower than this are treated as collapsed.
    pub min_std: f64,
    pub seed: u64,
}

impl Default for GmmParams {
    fn default() -> Self {
        Self { restarts: 10, tol: 1e-8, max_iter: 500, min_std: 1e-6, seed: 0 }
    }
}

/// Index 0 is the low-mean (least affected) component, index 1 the high-mean one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BimodalFit {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub std_devs: [f64; 2],
    pub log_likelihood: f64,
    pub iterations: usize,
}

impl BimodalFit {
    pub fn density(&self, x: f64) -> f64 {
        (0..2).map(|k| self.weights[k] * normal_pdf(x, self.means[k], self.std_devs[k])).sum()
    }
}

fn normal_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

fn log_normal_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

pub fn fit_gmm2(values: &[f64], params: &GmmParams) -> Result<BimodalFit> {
    fit_gmm2_traced(values, params).map(|(fit, _)| fit)
}

/// Like [`fit_gmm2`], also returning the per-iteration total log-likelihood
/// of the winning restart.
pub fn fit_gmm2_traced(values: &[f64], params: &GmmParams) -> Result<(BimodalFit, Vec<f64>)> {
    if values.len() < MIN_GMM_SAMPLES {
        return Err(MlError::TooFewSamples { need: MIN_GMM_SAMPLES, got: values.len() });
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(MlError::NonFinite("mixture samples"));
    }
    // EM runs on centered data; results are shifted back at the end.
    let center = values.iter().sum::<f64>() / values.len() as f64;
    let xs: Vec<f64> = values.iter().map(|v| v - center).collect();

    let mut best: Option<(BimodalFit, Vec<f64>)> = None;
    let mut degenerate = 0usize;
    for r in 0..params.restarts.max(1) {
        let mut rng = seeds::rng(seeds::child(params.seed, r as u64));
        let Some(init) = kmeans_pp_init(&xs, &mut rng, params.min_std) else {
            degenerate += 1;
            continue;
        };
        match run_em(&xs, init, params) {
            Some((fit, trace)) => {
                if best.as_ref().map_or(true, |(b, _)| fit.log_likelihood > b.log_likelihood) {
                    best = Some((fit, trace));
                }
            }
            None => degenerate += 1,
        }
    }
    let Some((mut fit, trace)) = best else {
        return Err(MlError::SingleMode(format!("all {degenerate} restarts collapsed to a single mode")));
    };
    fit.means[0] += center;
    fit.means[1] += center;
    Ok((fit, trace))
}

fn kmeans_pp_init(xs: &[f64], rng: &mut impl Rng, min_std: f64) -> Option<BimodalFit> {
    let n = xs.len();
    let c0 = xs[rng.random_range(0..n)];
    let d2: Vec<f64> = xs.iter().map(|x| (x - c0) * (x - c0)).collect();
    let total: f64 = d2.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut pick = rng.random_range(0.0..total);
    let mut c1 = xs[n - 1];
    for (x, d) in xs.iter().zip(&d2) {
        if pick < *d {
            c1 = *x;
            break;
        }
        pick -= d;
    }
    if c1 == c0 {
        return None;
    }
    // one Lloyd assignment to turn centers into moments
    let mut stats = [(0.0f64, 0.0f64, 0usize); 2];
    for &x in xs {
        let k = if (x - c0).abs() <= (x - c1).abs() { 0 } else { 1 };
        stats[k].0 += x;
        stats[k].1 += x * x;
        stats[k].2 += 1;
    }
    let mut fit = BimodalFit { weights: [0.5; 2], means: [c0, c1], std_devs: [1.0; 2], log_likelihood: 0.0, iterations: 0 };
    for k in 0..2 {
        let (s, ss, c) = stats[k];
        if c < 2 {
            return None;
        }
        let mu = s / c as f64;
        let var = (ss / c as f64 - mu * mu).max(0.0);
        fit.means[k] = mu;
        fit.std_devs[k] = var.sqrt();
        fit.weights[k] = c as f64 / n as f64;
        if fit.std_devs[k] < min_std {
            // a tight cluster is fine as a start; widen it so EM can move
            fit.std_devs[k] = (total / n as f64).sqrt().max(min_std) * 0.1;
        }
    }
    Some(fit)
}

fn run_em(xs: &[f64], mut fit: BimodalFit, params: &GmmParams) -> Option<(BimodalFit, Vec<f64>)> {
    let n = xs.len() as f64;
    let mut resp = vec![0.0; xs.len()];
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for it in 0..params.max_iter {
        // E step: responsibility of the high component, plus log-likelihood
        let mut ll = 0.0;
        for (r, &x) in resp.iter_mut().zip(xs) {
            let a = fit.weights[0].ln() + log_normal_pdf(x, fit.means[0], fit.std_devs[0]);
            let b = fit.weights[1].ln() + log_normal_pdf(x, fit.means[1], fit.std_devs[1]);
            let hi = a.max(b);
            let lse = hi + ((a - hi).exp() + (b - hi).exp()).ln();
            *r = (b - lse).exp();
            ll += lse;
        }
        trace.push(ll);
        fit.log_likelihood = ll;
        fit.iterations = it;
        if (ll - prev).abs() <= params.tol * n.max(1.0) && it > 0 {
            break;
        }
        prev = ll;
        // M step
        let w1: f64 = resp.iter().sum();
        let w0 = n - w1;
        if w0 <= 1e-12 || w1 <= 1e-12 {
            return None;
        }
        let mu1 = resp.iter().zip(xs).map(|(r, x)| r * x).sum::<f64>() / w1;
        let mu0 = resp.iter().zip(xs).map(|(r, x)| (1.0 - r) * x).sum::<f64>() / w0;
        let v1 = resp.iter().zip(xs).map(|(r, x)| r * (x - mu1) * (x - mu1)).sum::<f64>() / w1;
        let v0 = resp.iter().zip(xs).map(|(r, x)| (1.0 - r) * (x - mu0) * (x - mu0)).sum::<f64>() / w0;
        let (s0, s1) = (v0.sqrt(), v1.sqrt());
        if s0 < params.min_std || s1 < params.min_std || !s0.is_finite() || !s1.is_finite() {
            return None;
        }
        fit.weights = [w0 / n, w1 / n];
        fit.means = [mu0, mu1];
        fit.std_devs = [s0, s1];
    }
    if fit.means[0] > fit.means[1] {
        fit.weights.swap(0, 1);
        fit.means.swap(0, 1);
        fit.std_devs.swap(0, 1);
    }
    Some((fit, trace))
}
