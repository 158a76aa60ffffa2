// SPDX-License-Identifier: Apache-2.0

//! Least-squares gradient boosting over depth-limited regression trees.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::matrix::{check_xy, Matrix};
use crate::tree::{Presorted, RegressionTree, TreeParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { n_estimators: 1024, learning_rate: 0.05, max_depth: 3, min_samples_leaf: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    init: f64,
    learning_rate: f64,
    trees: Vec<RegressionTree>,
}

pub fn fit_gbt(x: &Matrix, y: &[f64], params: &GbtParams) -> Result<GradientBoosting> {
    check_xy(x, y, 1)?;
    let m = x.rows();
    let init = y.iter().sum::<f64>() / m as f64;
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_samples_split: 2,
        min_samples_leaf: params.min_samples_leaf,
    };
    let pre = Presorted::new(x);
    let weights = vec![1u32; m];
    let mut fitted = vec![init; m];
    let mut residual = vec![0.0; m];
    let mut trees = Vec::with_capacity(params.n_estimators);
    for _ in 0..params.n_estimators {
        for i in 0..m {
            residual[i] = y[i] - fitted[i];
        }
        let tree = RegressionTree::fit_weighted(&pre, &residual, &weights, &tree_params);
        let single_leaf = tree.n_leaves() == 1;
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += params.learning_rate * tree.predict_row(x.row(i));
        }
        trees.push(tree);
        // a lone leaf is a constant step; once residuals cannot be split further, stop
        if single_leaf && residual.iter().all(|r| r.abs() < 1e-12 * (1.0 + init.abs())) {
            break;
        }
    }
    Ok(GradientBoosting { init, learning_rate: params.learning_rate, trees })
}

impl GradientBoosting {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}
