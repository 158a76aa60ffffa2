// SPDX-License-Identifier: Apache-2.0

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::matrix::{check_xy, Matrix};
use crate::seeds;
use crate::tree::{Presorted, RegressionTree, TreeParams};

/// Bagged regression trees. No per-split feature subsampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub bootstrap: bool,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 1024,
            bootstrap: true,
            min_samples_leaf: 1,
            min_samples_split: 2,
            max_depth: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
}

pub fn fit_random_forest(x: &Matrix, y: &[f64], params: &ForestParams) -> Result<RandomForest> {
    fit_random_forest_oob(x, y, params).map(|(f, _)| f)
}

/// Also returns each training row's out-of-bag prediction: the mean over the
/// trees whose bootstrap sample left that row out (None if every tree drew
/// it, or without bootstrap).
pub fn fit_random_forest_oob(x: &Matrix, y: &[f64], params: &ForestParams) -> Result<(RandomForest, Vec<Option<f64>>)> {
    check_xy(x, y, 1)?;
    let m = x.rows();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        min_samples_leaf: params.min_samples_leaf,
    };
    let pre = Presorted::new(x);
    let mut oob_sum = vec![0.0; m];
    let mut oob_n = vec![0u32; m];
    let trees = (0..params.n_estimators.max(1))
        .map(|t| {
            let mut weights = vec![0u32; m];
            if params.bootstrap {
                let mut rng = seeds::rng(seeds::child(params.seed, t as u64));
                for _ in 0..m {
                    weights[rng.random_range(0..m)] += 1;
                }
            } else {
                weights.fill(1);
            }
            let tree = RegressionTree::fit_weighted(&pre, y, &weights, &tree_params);
            if params.bootstrap {
                for i in (0..m).filter(|&i| weights[i] == 0) {
                    oob_sum[i] += tree.predict_row(x.row(i));
                    oob_n[i] += 1;
                }
            }
            tree
        })
        .collect();
    let oob = oob_sum.iter().zip(&oob_n).map(|(&s, &n)| (n > 0).then(|| s / n as f64)).collect();
    Ok((RandomForest { trees }, oob))
}

impl RandomForest {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}
