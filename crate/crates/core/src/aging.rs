// SPDX-License-Identifier: Apache-2.0

//! Aging physics and the learned per-cell aging model.
//!
//! The ground-truth oracle is parametric: a bias-temperature term driven by
//! the fraction of time the cell output sits high, plus a hot-carrier term
//! driven by the switching rate, both sublinear in time. The threshold
//! shift maps to delay through a first-order alpha-power sensitivity.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use agewise_mlkit::{fit_gbt, r2_score, GbtParams, GradientBoosting, Matrix};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::library::{CellLibrary, Drive, GateType};
use crate::netlist::ActivityProfile;
use crate::seeds;
use crate::sta::{Inst, StaError, TimingGraph, TimingPath};

#[derive(Debug, Error, PartialEq)]
pub enum AgingError {
    #[error("{0} out of range: {1}")]
    OutOfRange(&'static str, f64),
    #[error("no activity recorded for net `{0}`")]
    MissingActivity(String),
    #[error("gate age model for {gate} {drive} misses the quality bar: {why}")]
    FitQuality { gate: GateType, drive: Drive, why: String },
    #[error("no aging model for {0} {1}")]
    NoModel(GateType, Drive),
    #[error(transparent)]
    Sta(#[from] StaError),
    #[error("model fit failed: {0}")]
    Fit(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgingConditions {
    pub months: f64,
    pub temperature_c: f64,
    pub vdd: f64,
}

impl AgingConditions {
    pub fn months(months: f64) -> Self {
        AgingConditions { months, ..Default::default() }
    }
}

impl Default for AgingConditions {
    fn default() -> Self {
        AgingConditions { months: 12.0, temperature_c: 125.0, vdd: 0.85 }
    }
}

/// Calibration constants of the oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgingPhysics {
    /// Bias-temperature amplitude at the reference age (V).
    pub a_n: f64,
    /// Hot-carrier amplitude at the reference age (V).
    pub a_h: f64,
    pub n_exp: f64,
    pub h_exp: f64,
    pub t_ref_months: f64,
    /// Activation energy of the temperature factor (eV); the factor is 1 at
    /// `temp_ref_c`.
    pub activation_ev: f64,
    pub temp_ref_c: f64,
}

impl Default for AgingPhysics {
    fn default() -> Self {
        AgingPhysics {
            a_n: 0.030,
            a_h: 0.020,
            n_exp: 0.16,
            h_exp: 0.5,
            t_ref_months: 12.0,
            activation_ev: 0.1,
            temp_ref_c: 125.0,
        }
    }
}

const BOLTZMANN_EV: f64 = 8.617_333_262e-5;

impl AgingPhysics {
    pub fn theta(&self, temperature_c: f64) -> f64 {
        let t = temperature_c + 273.15;
        let t0 = self.temp_ref_c + 273.15;
        (self.activation_ev / BOLTZMANN_EV * (1.0 / t0 - 1.0 / t)).exp()
    }

    /// Threshold-voltage shift (V). `dc` is the fraction of time at logic 0
    /// and `tc_rate` the transitions per cycle.
    pub fn delta_vth(&self, dc: f64, tc_rate: f64, cond: &AgingConditions) -> Result<f64, AgingError> {
        if !(0.0..=1.0).contains(&dc) {
            return Err(AgingError::OutOfRange("duty cycle", dc));
        }
        if !(0.0..=1.0).contains(&tc_rate) {
            return Err(AgingError::OutOfRange("toggle rate", tc_rate));
        }
        if !(cond.months >= 0.0 && cond.months.is_finite()) {
            return Err(AgingError::OutOfRange("months", cond.months));
        }
        let t = cond.months / self.t_ref_months;
        let th = self.theta(cond.temperature_c);
        Ok(self.a_n * (1.0 - dc).sqrt() * t.powf(self.n_exp) * th + self.a_h * tc_rate.sqrt() * t.powf(self.h_exp) * th)
    }

    /// Relative delay increase for a given threshold shift.
    pub fn sensitivity(&self, delta_vth: f64, cond: &AgingConditions, lib: &CellLibrary) -> Result<f64, AgingError> {
        let headroom = cond.vdd - lib.vth0;
        if !(headroom > 0.0) {
            return Err(AgingError::OutOfRange("vdd - vth0", headroom));
        }
        Ok(delta_vth / headroom)
    }

    /// Delay increase (ps) of a cell whose nominal delay is `base`.
    pub fn delta_delay_for_base(
        &self,
        base: f64,
        dc: f64,
        tc: u64,
        cycles: u64,
        cond: &AgingConditions,
        lib: &CellLibrary,
    ) -> Result<f64, AgingError> {
        if tc > cycles || cycles == 0 {
            return Err(AgingError::OutOfRange("toggle count", tc as f64));
        }
        let dv = self.delta_vth(dc, tc as f64 / cycles as f64, cond)?;
        Ok(base * self.sensitivity(dv, cond, lib)?)
    }

    pub fn delta_delay(
        &self,
        gate: GateType,
        drive: Drive,
        dc: f64,
        tc: u64,
        cycles: u64,
        cond: &AgingConditions,
        lib: &CellLibrary,
    ) -> Result<f64, AgingError> {
        self.delta_delay_for_base(lib.delay(gate, drive), dc, tc, cycles, cond, lib)
    }
}

/// Threshold shift under the default calibration.
pub fn oracle_delta_vth(dc: f64, tc_rate: f64, cond: &AgingConditions) -> Result<f64, AgingError> {
    AgingPhysics::default().delta_vth(dc, tc_rate, cond)
}

/// Delay shift of a library cell under the default calibration.
pub fn oracle_delta_delay(
    gate: GateType,
    drive: Drive,
    dc: f64,
    tc: u64,
    cycles: u64,
    cond: &AgingConditions,
    lib: &CellLibrary,
) -> Result<f64, AgingError> {
    AgingPhysics::default().delta_delay(gate, drive, dc, tc, cycles, cond, lib)
}

// JSON object keys must be strings, so per-cell maps travel as lists.
mod cell_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::library::{Drive, GateType};

    pub fn serialize<V: Serialize, S: Serializer>(m: &BTreeMap<(GateType, Drive), V>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter().map(|((g, d), v)| (g, d, v)))
    }

    pub fn deserialize<'de, V: Deserialize<'de>, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(GateType, Drive), V>, D::Error> {
        let v: Vec<(GateType, Drive, V)> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|(g, dr, x)| ((g, dr), x)).collect())
    }
}

pub const DC_STEPS: usize = 21;
pub const TC_STEPS: usize = 51;
pub const MONTHS: u32 = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgingRecord {
    pub dc: f64,
    pub tc: u64,
    pub months: u32,
    pub delta_ps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateAgingDb {
    pub tc_min: u64,
    pub tc_max: u64,
    pub cycles: u64,
    pub dc_step: f64,
    pub tc_step: f64,
    pub conditions: AgingConditions,
    /// Records per (gate, drive), DC-major, then TC, then months.
    #[serde(with = "cell_map")]
    pub cells: BTreeMap<(GateType, Drive), Vec<AgingRecord>>,
}

/// The DC axis: 0, 0.05, ..., 1.
pub fn dc_grid() -> Vec<f64> {
    (0..DC_STEPS).map(|i| i as f64 / (DC_STEPS - 1) as f64).collect()
}

/// The TC axis: 51 evenly spaced counts from `tc_min` to `tc_max`, rounded to
/// integers, without duplicates.
pub fn tc_grid(tc_min: u64, tc_max: u64) -> Vec<u64> {
    let mut v: Vec<u64> = (0..TC_STEPS)
        .map(|j| {
            let x = tc_min as f64 + (tc_max - tc_min) as f64 * j as f64 / (TC_STEPS - 1) as f64;
            x.round() as u64
        })
        .collect();
    v.dedup();
    v
}

/// Sweeps the oracle over DC x TC x months 1..12 for every cell.
pub fn build_gate_aging_db(
    lib: &CellLibrary,
    tc_min: u64,
    tc_max: u64,
    cycles: u64,
    cond: &AgingConditions,
    physics: &AgingPhysics,
) -> Result<GateAgingDb, AgingError> {
    if tc_min > tc_max || tc_max > cycles {
        return Err(AgingError::OutOfRange("toggle-count bounds", tc_max as f64));
    }
    let dcs = dc_grid();
    let tcs = tc_grid(tc_min, tc_max);
    let mut cells = BTreeMap::new();
    for g in GateType::ALL {
        for d in Drive::ALL {
            let mut recs = Vec::with_capacity(dcs.len() * tcs.len() * MONTHS as usize);
            for &dc in &dcs {
                for &tc in &tcs {
                    for m in 1..=MONTHS {
                        let c = AgingConditions { months: m as f64, ..cond.clone() };
                        let delta_ps = physics.delta_delay(g, d, dc, tc, cycles, &c, lib)?;
                        recs.push(AgingRecord { dc, tc, months: m, delta_ps });
                    }
                }
            }
            cells.insert((g, d), recs);
        }
    }
    Ok(GateAgingDb {
        tc_min,
        tc_max,
        cycles,
        dc_step: 1.0 / (DC_STEPS - 1) as f64,
        tc_step: (tc_max - tc_min) as f64 / (TC_STEPS - 1) as f64,
        conditions: cond.clone(),
        cells,
    })
}

impl GateAgingDb {
    /// CSV with header `gate,drive,dc,tc,months,delta_ps`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("gate,drive,dc,tc,months,delta_ps\n");
        for ((g, d), recs) in &self.cells {
            for r in recs {
                let _ = writeln!(s, "{g},{d},{},{},{},{}", r.dc, r.tc, r.months, r.delta_ps);
            }
        }
        s
    }

    /// Reads the CSV records back (sweep metadata is not part of the CSV).
    pub fn records_from_csv(text: &str) -> Result<BTreeMap<(GateType, Drive), Vec<AgingRecord>>, String> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "gate,drive,dc,tc,months,delta_ps")) => {}
            _ => return Err("missing or wrong CSV header".into()),
        }
        let mut cells: BTreeMap<(GateType, Drive), Vec<AgingRecord>> = BTreeMap::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = || format!("line {}: malformed record `{line}`", i + 1);
            if f.len() != 6 {
                return Err(bad());
            }
            let g: GateType = f[0].parse()?;
            let d: Drive = f[1].parse()?;
            let rec = AgingRecord {
                dc: f[2].parse().map_err(|_| bad())?,
                tc: f[3].parse().map_err(|_| bad())?,
                months: f[4].parse().map_err(|_| bad())?,
                delta_ps: f[5].parse().map_err(|_| bad())?,
            };
            cells.entry((g, d)).or_default().push(rec);
        }
        Ok(cells)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellAgeModel {
    pub model: GradientBoosting,
    pub holdout_r2: f64,
    /// Largest relative error over the training grid points.
    pub train_max_rel_err: f64,
}

/// Learned (DC, TC, months) -> delay shift regressors, one per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateAgeModel {
    pub cycles: u64,
    #[serde(with = "cell_map")]
    pub cells: BTreeMap<(GateType, Drive), CellAgeModel>,
}

/// Boosted trees deep enough to interpolate the sweep grid.
pub fn gate_model_params() -> GbtParams {
    GbtParams { n_estimators: 24, learning_rate: 0.5, max_depth: 64, min_samples_leaf: 1 }
}

const GATE_MODEL_SEED: u64 = 0x6167_6531;

fn features(dc: f64, tc: u64, months: f64) -> [f64; 3] {
    [dc, tc as f64, months]
}

/// Fits every cell on a seeded 80% of its grid and checks the rest.
pub fn fit_gate_age_model(db: &GateAgingDb) -> Result<GateAgeModel, AgingError> {
    let params = gate_model_params();
    let mut cells = BTreeMap::new();
    for (&(g, d), recs) in &db.cells {
        let mut idx: Vec<usize> = (0..recs.len()).collect();
        idx.shuffle(&mut seeds::rng(GATE_MODEL_SEED));
        let n_train = (recs.len() * 4).div_ceil(5);
        let (train, test) = idx.split_at(n_train);
        let rows = |ix: &[usize]| {
            let data: Vec<f64> = ix.iter().flat_map(|&i| features(recs[i].dc, recs[i].tc, recs[i].months as f64)).collect();
            Matrix::from_vec(ix.len(), 3, data).map_err(|e| AgingError::Fit(e.to_string()))
        };
        let xt = rows(train)?;
        let yt: Vec<f64> = train.iter().map(|&i| recs[i].delta_ps).collect();
        let model = fit_gbt(&xt, &yt, &params).map_err(|e| AgingError::Fit(e.to_string()))?;
        let pt = model.predict(&xt);
        let mut worst = 0.0f64;
        for (p, y) in pt.iter().zip(&yt) {
            // a floor keeps exact-zero grid points meaningful
            worst = worst.max((p - y).abs() / y.abs().max(1e-3));
        }
        let holdout_r2 = if test.is_empty() {
            1.0
        } else {
            let xv = rows(test)?;
            let yv: Vec<f64> = test.iter().map(|&i| recs[i].delta_ps).collect();
            r2_score(&model.predict(&xv), &yv)
        };
        if holdout_r2 < 0.99 {
            return Err(AgingError::FitQuality { gate: g, drive: d, why: format!("held-out R^2 {holdout_r2:.5}") });
        }
        if worst > 0.02 {
            return Err(AgingError::FitQuality { gate: g, drive: d, why: format!("training relative error {worst:.4}") });
        }
        cells.insert((g, d), CellAgeModel { model, holdout_r2, train_max_rel_err: worst });
    }
    Ok(GateAgeModel { cycles: db.cycles, cells })
}

impl GateAgeModel {
    /// Predicted delay shift (ps), clamped at 0; exactly 0 at age 0.
    pub fn predict(&self, gate: GateType, drive: Drive, dc: f64, tc: u64, months: f64) -> Result<f64, AgingError> {
        if months <= 0.0 {
            return Ok(0.0);
        }
        let m = self.cells.get(&(gate, drive)).ok_or(AgingError::NoModel(gate, drive))?;
        Ok(m.model.predict_row(&features(dc, tc, months)).max(0.0))
    }

    /// Predicted shift of one instance from its output net's activity.
    /// Flip-flops use the BUF x1 model rescaled to clk_to_q.
    pub fn predict_instance(
        &self,
        graph: &TimingGraph,
        inst: Inst,
        activity: &ActivityProfile,
        months: f64,
    ) -> Result<f64, AgingError> {
        let net = graph.inst_output(inst);
        let a = activity.get(net).ok_or_else(|| AgingError::MissingActivity(net.to_string()))?;
        let tc = rescale_tc(a.tc, activity.cycles, self.cycles);
        let (g, d) = graph.inst_cell(inst);
        let p = self.predict(g, d, a.dc, tc, months)?;
        Ok(match inst {
            Inst::FlipFlop(_) => p * graph.lib.clk_to_q / graph.lib.delay(GateType::Buf, Drive::X1),
            _ => p,
        })
    }
}

/// Maps a toggle count observed over `from` cycles onto a `to`-cycle window.
pub fn rescale_tc(tc: u64, from: u64, to: u64) -> u64 {
    if from == to {
        tc
    } else {
        ((tc as f64) * to as f64 / from as f64).round() as u64
    }
}

/// Per-instance predicted shifts at `months`, keyed by instance name.
pub fn predict_instance_aging(
    graph: &TimingGraph,
    model: &GateAgeModel,
    activity: &ActivityProfile,
    months: f64,
) -> Result<HashMap<String, f64>, AgingError> {
    let mut out = HashMap::new();
    for inst in graph.instances() {
        out.insert(graph.inst_name(inst).to_string(), model.predict_instance(graph, inst, activity, months)?);
    }
    Ok(out)
}

/// Predicted aging-induced delay change of each path.
pub fn predict_path_aging(
    graph: &TimingGraph,
    paths: &[TimingPath],
    model: &GateAgeModel,
    activity: &ActivityProfile,
    months: f64,
) -> Result<Vec<f64>, AgingError> {
    let inc = predict_instance_aging(graph, model, activity, months)?;
    Ok(graph.retime_increments(paths, &inc)?)
}
