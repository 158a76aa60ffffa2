// SPDX-License-Identifier: Apache-2.0

//! Penalized linear regression.
//!
//! Ridge is solved in closed form through the normal equations. Lasso and
//! elastic net minimize
//!
//! ```text
//! 1/(2m) ||y - Xw - b||^2 + alpha * l1_ratio * ||w||_1 + alpha * (1 - l1_ratio) / 2 * ||w||^2
//! ```
//!
//! by cyclic coordinate descent on centered data. The intercept is never
//! penalized.

use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::matrix::{check_xy, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Coordinate-descent sweeps performed (0 for closed-form fits).
    pub n_iter: usize,
    pub converged: bool,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeParams {
    pub alpha: f64,
    /// Kept for parity with iterative solvers; the closed form ignores it.
    pub max_iter: usize,
}

impl Default for RidgeParams {
    fn default() -> Self {
        Self { alpha: 1.0, max_iter: 5000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoParams {
    pub alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self { alpha: 0.001, max_iter: 5000, tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetParams {
    pub alpha: f64,
    pub l1_ratio: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ElasticNetParams {
    fn default() -> Self {
        Self { alpha: 0.001, l1_ratio: 0.5, max_iter: 1000, tol: 1e-6 }
    }
}

struct Centered {
    /// Column-major centered design.
    cols: Vec<Vec<f64>>,
    x_mean: Vec<f64>,
    y: Vec<f64>,
    y_mean: f64,
}

fn center(x: &Matrix, y: &[f64]) -> Centered {
    let m = x.rows();
    let y_mean = y.iter().sum::<f64>() / m as f64;
    let mut cols = Vec::with_capacity(x.cols());
    let mut x_mean = Vec::with_capacity(x.cols());
    for j in 0..x.cols() {
        let mut c = x.column(j);
        let mu = c.iter().sum::<f64>() / m as f64;
        c.iter_mut().for_each(|v| *v -= mu);
        cols.push(c);
        x_mean.push(mu);
    }
    Centered { cols, x_mean, y: y.iter().map(|v| v - y_mean).collect(), y_mean }
}

fn intercept(c: &Centered, coef: &[f64]) -> f64 {
    c.y_mean - c.x_mean.iter().zip(coef).map(|(m, w)| m * w).sum::<f64>()
}

pub fn fit_ridge(x: &Matrix, y: &[f64], params: &RidgeParams) -> Result<LinearModel> {
    check_xy(x, y, 1)?;
    let c = center(x, y);
    let d = x.cols();
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    for i in 0..d {
        b[i] = dot(&c.cols[i], &c.y);
        for j in 0..=i {
            let v = dot(&c.cols[i], &c.cols[j]);
            a[i * d + j] = v;
            a[j * d + i] = v;
        }
        a[i * d + i] += params.alpha;
    }
    let coef = cholesky_solve(&mut a, &mut b, d).ok_or(MlError::Singular("ridge"))?;
    let intercept = intercept(&c, &coef);
    Ok(LinearModel { coef, intercept, n_iter: 0, converged: true })
}

pub fn fit_lasso(x: &Matrix, y: &[f64], params: &LassoParams) -> Result<LinearModel> {
    check_xy(x, y, 1)?;
    Ok(coordinate_descent(x, y, params.alpha, 1.0, params.max_iter, params.tol, None))
}

pub fn fit_enet(x: &Matrix, y: &[f64], params: &ElasticNetParams) -> Result<LinearModel> {
    check_xy(x, y, 1)?;
    Ok(coordinate_descent(x, y, params.alpha, params.l1_ratio, params.max_iter, params.tol, None))
}

/// Value of the elastic-net objective for a fitted model.
pub fn enet_objective(x: &Matrix, y: &[f64], model: &LinearModel, alpha: f64, l1_ratio: f64) -> f64 {
    let m = x.rows() as f64;
    let sse: f64 = (0..x.rows())
        .map(|i| {
            let r = y[i] - model.predict_row(x.row(i));
            r * r
        })
        .sum();
    let l1: f64 = model.coef.iter().map(|w| w.abs()).sum();
    let l2: f64 = model.coef.iter().map(|w| w * w).sum();
    sse / (2.0 * m) + alpha * l1_ratio * l1 + 0.5 * alpha * (1.0 - l1_ratio) * l2
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn coordinate_descent(
    x: &Matrix,
    y: &[f64],
    alpha: f64,
    l1_ratio: f64,
    max_iter: usize,
    tol: f64,
    mut trace: Option<&mut Vec<f64>>,
) -> LinearModel {
    let m = x.rows() as f64;
    let c = center(x, y);
    let d = x.cols();
    let norms: Vec<f64> = c.cols.iter().map(|col| dot(col, col)).collect();
    let l1_pen = m * alpha * l1_ratio;
    let l2_pen = m * alpha * (1.0 - l1_ratio);
    let mut w = vec![0.0; d];
    let mut resid = c.y.clone();
    let mut converged = false;
    let mut n_iter = 0;
    for sweep in 0..max_iter {
        n_iter = sweep + 1;
        let mut max_step: f64 = 0.0;
        for j in 0..d {
            if norms[j] == 0.0 {
                continue;
            }
            let old = w[j];
            let rho = dot(&c.cols[j], &resid) + norms[j] * old;
            let new = soft_threshold(rho, l1_pen) / (norms[j] + l2_pen);
            if new != old {
                let delta = new - old;
                for (r, xv) in resid.iter_mut().zip(&c.cols[j]) {
                    *r -= delta * xv;
                }
                w[j] = new;
                max_step = max_step.max(delta.abs());
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            let model = LinearModel { coef: w.clone(), intercept: intercept(&c, &w), n_iter, converged };
            t.push(enet_objective(x, y, &model, alpha, l1_ratio));
        }
        if max_step < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("coordinate descent stopped after {max_iter} sweeps without reaching tol={tol}");
    }
    let intercept = intercept(&c, &w);
    LinearModel { coef: w, intercept, n_iter, converged }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `a x = b` in place for symmetric positive definite `a` (d x d).
fn cholesky_solve(a: &mut [f64], b: &mut [f64], d: usize) -> Option<Vec<f64>> {
    let scale = (0..d).map(|i| a[i * d + i].abs()).fold(0.0, f64::max).max(1e-300);
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if diag <= scale * 1e-14 {
            return None;
        }
        let ljj = diag.sqrt();
        a[j * d + j] = ljj;
        for i in j + 1..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = s / ljj;
        }
    }
    // forward: L z = b
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * d + k] * b[k];
        }
        b[i] = s / a[i * d + i];
    }
    // backward: L^T x = z
    for i in (0..d).rev() {
        let mut s = b[i];
        for k in i + 1..d {
            s -= a[k * d + i] * b[k];
        }
        b[i] = s / a[i * d + i];
    }
    Some(b.to_vec())
}
