// SPDX-License-Identifier: Apache-2.0

//! Small, dependency-light learning kit.
//!
//! Everything here is deterministic under a fixed seed: the six level-one
//! regressors (ridge, lasso, elastic net, random forest, gradient-boosted
//! trees, a one-hidden-layer perceptron), the out-of-fold stacking driver with
//! a lasso combiner, and a two-component 1-D Gaussian mixture fitted by EM.

pub mod error;
pub mod gbt;
pub mod gmm;
pub mod linear;
pub mod matrix;
pub mod mlp;
pub mod persist;
pub mod scaler;
pub mod stack;
pub mod tree;

mod forest;
mod seeds;

pub use error::{MlError, Result};
pub use forest::{fit_random_forest, fit_random_forest_oob, ForestParams, RandomForest};
pub use gbt::{fit_gbt, GbtParams, GradientBoosting};
pub use gmm::{fit_gmm2, fit_gmm2_traced, BimodalFit, GmmParams};
pub use linear::{fit_enet, fit_lasso, fit_ridge, ElasticNetParams, LassoParams, LinearModel, RidgeParams};
pub use matrix::Matrix;
pub use mlp::{fit_mlp, Mlp, MlpParams};
pub use scaler::StandardScaler;
pub use stack::{fit_stacked, MemberKind, Regressor, StackHyper, StackedModel};
pub use tree::{RegressionTree, TreeParams};

/// Root-mean-square error between two equally long slices.
pub fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    if pred.is_empty() {
        return 0.0;
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    (sse / pred.len() as f64).sqrt()
}

/// Coefficient of determination. Returns 1.0 for a constant target that is
/// predicted exactly and 0.0 for a constant target that is not.
pub fn r2_score(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}
