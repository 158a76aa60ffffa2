// SPDX-License-Identifier: Apache-2.0

//! Two-level stacked regression.
//!
//! Level one holds ridge, lasso, elastic net, random forest, gradient-boosted
//! trees and an MLP, each fitted on the full standardized training set. The
//! level-two lasso is fitted on out-of-fold level-one predictions so that it
//! never sees a member's in-sample output.

use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::forest::{fit_random_forest, fit_random_forest_oob, ForestParams, RandomForest};
use crate::gbt::{fit_gbt, GbtParams, GradientBoosting};
use crate::linear::{fit_enet, fit_lasso, fit_ridge, ElasticNetParams, LassoParams, LinearModel, RidgeParams};
use crate::matrix::{check_xy, Matrix};
use crate::mlp::{fit_mlp, Mlp, MlpParams};
use crate::scaler::StandardScaler;
use crate::seeds;

pub const MIN_STACK_SAMPLES: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemberKind {
    Ridge,
    Lasso,
    ElasticNet,
    RandomForest,
    GradientBoosting,
    Mlp,
}

impl MemberKind {
    pub const ALL: [MemberKind; 6] = [
        MemberKind::Ridge,
        MemberKind::Lasso,
        MemberKind::ElasticNet,
        MemberKind::RandomForest,
        MemberKind::GradientBoosting,
        MemberKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MemberKind::Ridge => "ridge",
            MemberKind::Lasso => "lasso",
            MemberKind::ElasticNet => "enet",
            MemberKind::RandomForest => "rf",
            MemberKind::GradientBoosting => "gbt",
            MemberKind::Mlp => "mlp",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Regressor {
    Linear(LinearModel),
    Forest(RandomForest),
    Boosting(GradientBoosting),
    Mlp(Mlp),
}

impl Regressor {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            Regressor::Linear(m) => m.predict_row(row),
            Regressor::Forest(m) => m.predict_row(row),
            Regressor::Boosting(m) => m.predict_row(row),
            Regressor::Mlp(m) => m.predict_row(row),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackHyper {
    pub ridge: RidgeParams,
    pub lasso: LassoParams,
    pub enet: ElasticNetParams,
    pub forest: ForestParams,
    pub gbt: GbtParams,
    pub mlp: MlpParams,
    pub combiner: LassoParams,
    pub folds: usize,
    /// Feed the combiner the forest's out-of-bag predictions instead of
    /// refitting it per fold. Both are out-of-sample; out-of-bag costs one
    /// forest instead of `folds + 1`.
    #[serde(default)]
    pub forest_oob: bool,
    /// Members to leave out entirely (ablations, fast test configurations).
    pub disabled: Vec<MemberKind>,
}

impl Default for StackHyper {
    fn default() -> Self {
        Self {
            ridge: RidgeParams::default(),
            lasso: LassoParams::default(),
            enet: ElasticNetParams::default(),
            forest: ForestParams::default(),
            gbt: GbtParams::default(),
            mlp: MlpParams::default(),
            combiner: LassoParams { alpha: 0.001, max_iter: 5000, tol: 1e-6 },
            folds: 5,
            forest_oob: true,
            disabled: Vec::new(),
        }
    }
}

/// Fits one level-one member on (already standardized) data.
pub fn fit_member(kind: MemberKind, x: &Matrix, y: &[f64], hyper: &StackHyper, seed: u64) -> Result<Regressor> {
    Ok(match kind {
        MemberKind::Ridge => Regressor::Linear(fit_ridge(x, y, &hyper.ridge)?),
        MemberKind::Lasso => Regressor::Linear(fit_lasso(x, y, &hyper.lasso)?),
        MemberKind::ElasticNet => Regressor::Linear(fit_enet(x, y, &hyper.enet)?),
        MemberKind::RandomForest => {
            Regressor::Forest(fit_random_forest(x, y, &ForestParams { seed, ..hyper.forest.clone() })?)
        }
        MemberKind::GradientBoosting => Regressor::Boosting(fit_gbt(x, y, &hyper.gbt)?),
        MemberKind::Mlp => Regressor::Mlp(fit_mlp(x, y, &MlpParams { seed, ..hyper.mlp.clone() })?),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub scaler: StandardScaler,
    pub members: Vec<(MemberKind, Regressor)>,
    pub combiner: LinearModel,
    /// Members that failed to train, with the failure message.
    pub excluded: Vec<(MemberKind, String)>,
    pub fold_seed: u64,
    pub hyper: StackHyper,
}

/// Deterministic fold assignment: a seeded shuffle dealt round-robin.
pub fn fold_assignment(m: usize, folds: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut seeds::rng(seed));
    let mut fold = vec![0; m];
    for (k, &i) in idx.iter().enumerate() {
        fold[i] = k % folds;
    }
    fold
}

pub fn fit_stacked(x: &Matrix, y: &[f64], hyper: &StackHyper, fold_seed: u64) -> Result<StackedModel> {
    check_xy(x, y, MIN_STACK_SAMPLES)?;
    let m = x.rows();
    let folds = hyper.folds.clamp(2, m);
    let scaler = StandardScaler::fit(x);
    let xs = scaler.transform(x);
    let assignment = fold_assignment(m, folds, fold_seed);

    let mut members = Vec::new();
    let mut excluded = Vec::new();
    let mut oof_cols: Vec<Vec<f64>> = Vec::new();
    for (k, kind) in MemberKind::ALL.into_iter().enumerate() {
        if hyper.disabled.contains(&kind) {
            continue;
        }
        let member_seed = seeds::child(fold_seed, 100 + k as u64);
        let outcome = (|| -> Result<(Regressor, Vec<f64>)> {
            if kind == MemberKind::RandomForest && hyper.forest_oob && hyper.forest.bootstrap {
                let params = ForestParams { seed: member_seed, ..hyper.forest.clone() };
                let (forest, oob) = fit_random_forest_oob(&xs, y, &params)?;
                // a row drawn by every tree falls back to the in-sample mean
                let oob = oob.iter().enumerate().map(|(i, o)| o.unwrap_or_else(|| forest.predict_row(xs.row(i)))).collect();
                return Ok((Regressor::Forest(forest), oob));
            }
            let full = fit_member(kind, &xs, y, hyper, member_seed)?;
            let mut oof = vec![0.0; m];
            for f in 0..folds {
                let train: Vec<usize> = (0..m).filter(|&i| assignment[i] != f).collect();
                let held: Vec<usize> = (0..m).filter(|&i| assignment[i] == f).collect();
                let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                let fold_model = fit_member(kind, &xs.select_rows(&train), &ty, hyper, seeds::child(member_seed, f as u64))?;
                for &i in &held {
                    oof[i] = fold_model.predict_row(xs.row(i));
                }
            }
            if !oof.iter().all(|v| v.is_finite()) {
                return Err(MlError::NonFinite("out-of-fold predictions"));
            }
            Ok((full, oof))
        })();
        match outcome {
            Ok((model, oof)) => {
                members.push((kind, model));
                oof_cols.push(oof);
            }
            Err(e) => {
                log::warn!("stacking member {} excluded: {e}", kind.name());
                excluded.push((kind, e.to_string()));
            }
        }
    }
    if members.is_empty() {
        let why = excluded.iter().map(|(k, e)| format!("{}: {e}", k.name())).collect::<Vec<_>>().join("; ");
        return Err(MlError::NoMembers(why));
    }
    let level2 = Matrix::from_vec(
        m,
        oof_cols.len(),
        (0..m).flat_map(|i| oof_cols.iter().map(move |c| c[i])).collect(),
    )?;
    let combiner = fit_lasso(&level2, y, &hyper.combiner)?;
    Ok(StackedModel { scaler, members, combiner, excluded, fold_seed, hyper: hyper.clone() })
}

impl StackedModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut z = vec![0.0; row.len()];
        self.scaler.transform_row(row, &mut z);
        let level1: Vec<f64> = self.members.iter().map(|(_, r)| r.predict_row(&z)).collect();
        self.combiner.predict_row(&level1)
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }

    /// Level-one predictions of every retained member, in member order.
    pub fn member_predictions(&self, x: &Matrix) -> Vec<(MemberKind, Vec<f64>)> {
        let xs = self.scaler.transform(x);
        self.members.iter().map(|(k, r)| (*k, r.predict(&xs))).collect()
    }
}
