// SPDX-License-Identifier: Apache-2.0

//! Recycled-chip detection.
//!
//! Design time: predict each path's aging from reference activity and split
//! the paths into the most (MAP) and least (LAP) aging-prone sets. Test time:
//! train a golden timing model on the chip's own MAP measurements, then
//! compare how far MAP and LAP measurements sit from that model.

mod features;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use agewise_mlkit::{fit_gmm2, fit_stacked, rmse, BimodalFit, GmmParams, Matrix, MlError, StackHyper, StackedModel};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{
    dataset_from_csv, dataset_header, dataset_to_csv, extract_all, extract_features, FeatureVector, Sample,
    FEATURE_NAMES, NUM_FEATURES,
};

use crate::aging::{predict_path_aging, AgingError, GateAgeModel};
use crate::cfst::{CfstConfig, CfstMeasurement};
use crate::netlist::ActivityProfile;
use crate::seeds;
use crate::sta::{TimingGraph, TimingPath};

pub const MIN_ADP_CANDIDATES: usize = 100;
pub const MIN_MAP: usize = 50;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("only {got} measurable candidate paths, need {need}")]
    TooFewCandidates { need: usize, got: usize },
    #[error("no age-distinguishing structure: predicted aging is single-mode")]
    SingleMode,
    #[error("MAP has {got} paths, need {need}")]
    TooFewMap { need: usize, got: usize },
    #[error("path {0} has no measurement")]
    MissingMeasurement(usize),
    #[error("unknown path id {0}")]
    UnknownPath(usize),
    #[error("empty {0} group")]
    EmptyGroup(&'static str),
    #[error("threshold must be positive, got {0}")]
    Threshold(f64),
    #[error("feature extraction: {0}")]
    Features(String),
    #[error(transparent)]
    Aging(#[from] AgingError),
    #[error(transparent)]
    Ml(#[from] MlError),
}

impl DetectError {
    /// Pipeline stage the error belongs to.
    pub fn stage(&self) -> &'static str {
        match self {
            DetectError::TooFewCandidates { .. } | DetectError::SingleMode | DetectError::Aging(_) => "adp",
            DetectError::TooFewMap { .. } | DetectError::Ml(_) | DetectError::Features(_) => "gtm",
            DetectError::MissingMeasurement(_) | DetectError::UnknownPath(_) => "added_delay",
            DetectError::EmptyGroup(_) => "mean_shift",
            DetectError::Threshold(_) => "classify",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Age at which path aging is predicted for the MAP/LAP split (months).
    pub horizon_months: f64,
    /// Verdict threshold on the mean shift (ps).
    pub th_ps: f64,
    pub split_seed: u64,
    pub gmm: GmmParams,
    pub stack: StackHyper,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            horizon_months: 12.0,
            th_ps: 10.0,
            split_seed: 1,
            gmm: GmmParams::default(),
            stack: StackHyper::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdpSets {
    pub map: Vec<usize>,
    pub lap: Vec<usize>,
    /// Measurable paths between the two cuts, or inside both.
    pub dropped: Vec<usize>,
    /// Paths the tester cannot clock.
    pub unmeasurable: Vec<usize>,
    pub fit: BimodalFit,
    pub f_max_ghz: f64,
    pub period_ps: f64,
}

/// Splits measurable paths by predicted aging at the horizon.
pub fn identify_adp(
    graph: &TimingGraph,
    paths: &[TimingPath],
    model: &GateAgeModel,
    activity: &ActivityProfile,
    cfst: &CfstConfig,
    cfg: &DetectorConfig,
) -> Result<AdpSets, DetectError> {
    let (cand, unmeasurable): (Vec<&TimingPath>, Vec<&TimingPath>) =
        paths.iter().partition(|p| cfst.measurable(p.delay));
    if cand.len() < MIN_ADP_CANDIDATES {
        return Err(DetectError::TooFewCandidates { need: MIN_ADP_CANDIDATES, got: cand.len() });
    }
    let owned: Vec<TimingPath> = cand.iter().map(|&p| p.clone()).collect();
    let pred = predict_path_aging(graph, &owned, model, activity, cfg.horizon_months)?;
    let fit = match fit_gmm2(&pred, &cfg.gmm) {
        Ok(f) => f,
        Err(MlError::SingleMode(_)) => return Err(DetectError::SingleMode),
        Err(e) => return Err(e.into()),
    };
    let map_cut = fit.means[1] - 2.0 * fit.std_devs[1];
    let lap_cut = fit.means[0] + 2.0 * fit.std_devs[0];
    let mut sets = AdpSets {
        map: Vec::new(),
        lap: Vec::new(),
        dropped: Vec::new(),
        unmeasurable: unmeasurable.iter().map(|p| p.id).collect(),
        fit,
        f_max_ghz: cfst.f_max_ghz,
        period_ps: graph.netlist.period,
    };
    for (p, &a) in owned.iter().zip(&pred) {
        match (a > map_cut, a < lap_cut) {
            (true, false) => sets.map.push(p.id),
            (false, true) => sets.lap.push(p.id),
            _ => sets.dropped.push(p.id),
        }
    }
    Ok(sets)
}

/// Seeded 60/20/20 split of the MAP ids.
pub fn split_map(map: &[usize], seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut ids = map.to_vec();
    ids.shuffle(&mut seeds::rng(seeds::child(seed, 0x7370_6c74)));
    let n = ids.len();
    let n_train = (n as f64 * 0.6).round() as usize;
    let n_val = (n as f64 * 0.2).round() as usize;
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    (ids, val, test)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberScore {
    pub member: String,
    pub validation_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtmDiagnostics {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub validation_rmse: f64,
    pub members: Vec<MemberScore>,
    pub excluded: Vec<String>,
}

/// Golden timing model: STA plus a learned correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gtm {
    pub model: StackedModel,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub diagnostics: GtmDiagnostics,
}

impl Gtm {
    pub fn predict(&self, sta_delay: f64, features: &FeatureVector) -> f64 {
        sta_delay + self.model.predict_row(features)
    }
}

/// Per-design lookup from path id to STA delay and features.
pub struct PathTable<'a> {
    paths: &'a [TimingPath],
    features: &'a [FeatureVector],
    index: HashMap<usize, usize>,
}

impl<'a> PathTable<'a> {
    pub fn new(paths: &'a [TimingPath], features: &'a [FeatureVector]) -> Self {
        assert_eq!(paths.len(), features.len(), "one feature vector per path");
        let index = paths.iter().enumerate().map(|(i, p)| (p.id, i)).collect();
        PathTable { paths, features, index }
    }

    fn get(&self, id: usize) -> Result<(&TimingPath, &FeatureVector), DetectError> {
        let &i = self.index.get(&id).ok_or(DetectError::UnknownPath(id))?;
        Ok((&self.paths[i], &self.features[i]))
    }
}

fn matrix(rows: &[&FeatureVector]) -> Result<Matrix, MlError> {
    Matrix::from_vec(rows.len(), NUM_FEATURES, rows.iter().flat_map(|r| r.iter().copied()).collect())
}

fn measured(cfst: &CfstMeasurement, id: usize) -> Result<f64, DetectError> {
    cfst.measured.get(&id).copied().ok_or(DetectError::MissingMeasurement(id))
}

/// Labelled samples (label = CFST - STA) for the given paths.
pub fn samples(table: &PathTable, cfst: &CfstMeasurement, ids: &[usize]) -> Result<Vec<Sample>, DetectError> {
    ids.iter()
        .map(|&id| {
            let (p, f) = table.get(id)?;
            Ok(Sample { path_id: id, features: *f, label_ps: measured(cfst, id)? - p.delay })
        })
        .collect()
}

pub fn build_gtm(
    table: &PathTable,
    cfst: &CfstMeasurement,
    adp: &AdpSets,
    split_seed: u64,
    hyper: &StackHyper,
) -> Result<Gtm, DetectError> {
    if adp.map.len() < MIN_MAP {
        return Err(DetectError::TooFewMap { need: MIN_MAP, got: adp.map.len() });
    }
    let (train, validation, test) = split_map(&adp.map, split_seed);
    let tr = samples(table, cfst, &train)?;
    let x = matrix(&tr.iter().map(|s| &s.features).collect::<Vec<_>>())?;
    let y: Vec<f64> = tr.iter().map(|s| s.label_ps).collect();
    let model = fit_stacked(&x, &y, hyper, split_seed)?;

    let va = samples(table, cfst, &validation)?;
    let (validation_rmse, members) = if va.is_empty() {
        (0.0, Vec::new())
    } else {
        let xv = matrix(&va.iter().map(|s| &s.features).collect::<Vec<_>>())?;
        let yv: Vec<f64> = va.iter().map(|s| s.label_ps).collect();
        let members = model
            .member_predictions(&xv)
            .into_iter()
            .map(|(k, p)| MemberScore { member: k.name().to_string(), validation_rmse: rmse(&p, &yv) })
            .collect();
        (rmse(&model.predict(&xv), &yv), members)
    };
    let diagnostics = GtmDiagnostics {
        n_train: train.len(),
        n_validation: validation.len(),
        n_test: test.len(),
        validation_rmse,
        members,
        excluded: model.excluded.iter().map(|(k, why)| format!("{}: {why}", k.name())).collect(),
    };
    Ok(Gtm { model, train, validation, test, diagnostics })
}

/// AD = CFST - GTM for each requested path.
pub fn added_delays(
    table: &PathTable,
    cfst: &CfstMeasurement,
    gtm: &Gtm,
    ids: &[usize],
) -> Result<BTreeMap<usize, f64>, DetectError> {
    let mut out = BTreeMap::new();
    for &id in ids {
        let (p, f) = table.get(id)?;
        out.insert(id, measured(cfst, id)? - gtm.predict(p.delay, f));
    }
    Ok(out)
}

fn group_mean(ad: &BTreeMap<usize, f64>, ids: &[usize], name: &'static str) -> Result<f64, DetectError> {
    if ids.is_empty() {
        return Err(DetectError::EmptyGroup(name));
    }
    let mut s = 0.0;
    for id in ids {
        s += ad.get(id).ok_or(DetectError::MissingMeasurement(*id))?;
    }
    Ok(s / ids.len() as f64)
}

/// (mean AD over `map_eval`, mean AD over `lap`, their difference).
pub fn mean_shift(ad: &BTreeMap<usize, f64>, map_eval: &[usize], lap: &[usize]) -> Result<(f64, f64, f64), DetectError> {
    let m = group_mean(ad, map_eval, "MAP")?;
    let l = group_mean(ad, lap, "LAP")?;
    Ok((m, l, m - l))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    New,
    Aged,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::New => "new",
            Verdict::Aged => "aged",
        })
    }
}

pub fn classify(ms: f64, th: f64) -> Result<Verdict, DetectError> {
    if !(th > 0.0) {
        return Err(DetectError::Threshold(th));
    }
    Ok(if th <= ms { Verdict::Aged } else { Verdict::New })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub chip_id: String,
    /// MAP test-split size.
    pub n: usize,
    /// LAP size.
    pub m: usize,
    pub mean_ad_map: f64,
    pub mean_ad_lap: f64,
    pub ms_ps: f64,
    pub th_ps: f64,
    pub verdict: Verdict,
    pub gtm: GtmDiagnostics,
    /// AD of every MAP test and LAP path.
    pub added_delays: Vec<AddedDelay>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AddedDelay {
    pub path_id: usize,
    pub group: String,
    pub value_ps: f64,
}

/// GTM, added delays, mean shift and verdict for one chip.
pub fn run_detection(
    chip_id: &str,
    table: &PathTable,
    adp: &AdpSets,
    cfst: &CfstMeasurement,
    cfg: &DetectorConfig,
) -> Result<DetectionReport, DetectError> {
    detect_with_gtm(chip_id, table, adp, cfst, cfg).map(|(r, _)| r)
}

/// [`run_detection`], also handing back the chip's golden timing model.
pub fn detect_with_gtm(
    chip_id: &str,
    table: &PathTable,
    adp: &AdpSets,
    cfst: &CfstMeasurement,
    cfg: &DetectorConfig,
) -> Result<(DetectionReport, Gtm), DetectError> {
    if !(cfg.th_ps > 0.0) {
        return Err(DetectError::Threshold(cfg.th_ps));
    }
    let gtm = build_gtm(table, cfst, adp, cfg.split_seed, &cfg.stack)?;
    let mut ids = gtm.test.clone();
    ids.extend(&adp.lap);
    let ad = added_delays(table, cfst, &gtm, &ids)?;
    let (mean_ad_map, mean_ad_lap, ms_ps) = mean_shift(&ad, &gtm.test, &adp.lap)?;
    let verdict = classify(ms_ps, cfg.th_ps)?;
    let tag = |group: &str, set: &[usize]| -> Vec<AddedDelay> {
        set.iter().map(|id| AddedDelay { path_id: *id, group: group.to_string(), value_ps: ad[id] }).collect()
    };
    let mut added = tag("MAP", &gtm.test);
    added.extend(tag("LAP", &adp.lap));
    let report = DetectionReport {
        chip_id: chip_id.to_string(),
        n: gtm.test.len(),
        m: adp.lap.len(),
        mean_ad_map,
        mean_ad_lap,
        ms_ps,
        th_ps: cfg.th_ps,
        verdict,
        gtm: gtm.diagnostics.clone(),
        added_delays: added,
    };
    Ok((report, gtm))
}

impl DetectionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Histogram data: one `value_ps` row per path, tagged by group.
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("path_id,group,value_ps\n");
        for a in &self.added_delays {
            let _ = writeln!(s, "{},{},{}", a.path_id, a.group, a.value_ps);
        }
        s
    }
}

/// Report for a run that failed part way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedDetection {
    pub chip_id: String,
    pub valid: bool,
    pub stage: String,
    pub cause: String,
}

impl FailedDetection {
    pub fn new(chip_id: &str, err: &DetectError) -> Self {
        FailedDetection { chip_id: chip_id.to_string(), valid: false, stage: err.stage().into(), cause: err.to_string() }
    }
}

/// Parses the histogram CSV back into tagged rows.
pub fn histogram_from_csv(text: &str) -> Result<Vec<AddedDelay>, String> {
    let mut lines = text.lines();
    if lines.next() != Some("path_id,group,value_ps") {
        return Err("bad histogram header".into());
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            match c.as_slice() {
                [id, g, v] => Ok(AddedDelay {
                    path_id: id.parse().map_err(|_| format!("bad path id in `{l}`"))?,
                    group: g.to_string(),
                    value_ps: v.parse().map_err(|_| format!("bad value in `{l}`"))?,
                }),
                _ => Err(format!("malformed histogram row `{l}`")),
            }
        })
        .collect()
}
