// SPDX-License-Identifier: Apache-2.0

//! Whole-study orchestration: configuration, the per-stage commands behind
//! the `agewise` binary, and the run directory they read and write.
//!
//! Run directory layout:
//!
//! ```text
//! config.toml
//! design/netlist.nlf  design/reference.act  design/paths.paths  design/adp.json
//! chips/<id>/fresh.chip  usage.act  aged.chip  measure.cfst
//! chips/<id>/dataset.csv  report.json | failed.json
//! report/summary.txt  report/summary.csv  report/chips.csv  report/histograms/<id>.csv
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aging::{build_gate_aging_db, fit_gate_age_model, AgingConditions, AgingPhysics, GateAgeModel};
use crate::cfst::{cfst_measure, CfstConfig, CfstMeasurement};
use crate::detector::{
    dataset_to_csv, detect_with_gtm, extract_all, identify_adp, samples, AdpSets, DetectError,
    DetectionReport, DetectorConfig, FailedDetection, FeatureVector, PathTable, Verdict,
};
use crate::fabsim::{age_chip, fabricate, sample_fab_model, ChipInstance, FabConfig, FabModel};
use crate::netlist::{generate_netlist, parse_activity, parse_netlist, simulate_activity, ActivityProfile, GenSpec, Netlist};
use crate::seeds;
use crate::sta::{TimingGraph, TimingPath};
use crate::CellLibrary;

/// Ages covered by the chip matrix: 0 (fresh) to 12 months.
pub const MAX_MONTHS: usize = 12;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{stage}: {msg}")]
    Stage { stage: &'static str, msg: String },
}

impl CampaignError {
    pub fn stage(&self) -> &'static str {
        match self {
            CampaignError::Io { .. } => "io",
            CampaignError::Config(_) => "config",
            CampaignError::Format { .. } => "format",
            CampaignError::Stage { stage, .. } => stage,
        }
    }
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> CampaignError {
    move |e| CampaignError::Stage { stage, msg: e.to_string() }
}

fn format_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CampaignError + '_ {
    move |e| CampaignError::Format { path: path.to_path_buf(), msg: e.to_string() }
}

pub type Result<T> = std::result::Result<T, CampaignError>;

// ------------------------------------------------------------------ config

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub num_ffs: usize,
    pub gates_per_cone: usize,
    pub depth: usize,
    pub guardband_fraction: f64,
    pub idle_fraction: f64,
}

impl Default for GenSection {
    fn default() -> Self {
        let g = GenSpec::default();
        GenSection {
            num_ffs: g.num_ffs,
            gates_per_cone: g.gates_per_cone,
            depth: g.depth,
            guardband_fraction: g.guardband_fraction,
            idle_fraction: g.idle_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivitySection {
    pub cycles: u64,
}

impl Default for ActivitySection {
    fn default() -> Self {
        ActivitySection { cycles: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgingSection {
    pub temperature_c: f64,
    pub vdd: f64,
}

impl Default for AgingSection {
    fn default() -> Self {
        let c = AgingConditions::default();
        AgingSection { temperature_c: c.temperature_c, vdd: c.vdd }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub horizon_months: f64,
    pub th_ps: f64,
    /// Longest paths kept per endpoint.
    pub paths_per_endpoint: usize,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection { horizon_months: 12.0, th_ps: 10.0, paths_per_endpoint: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChipsSection {
    /// Chips per age; entry k is the number of chips used for k months.
    pub counts: Vec<usize>,
}

impl Default for ChipsSection {
    fn default() -> Self {
        ChipsSection { counts: vec![20, 2, 2, 2, 2, 2, 2, 2, 2, 1, 1, 1, 1] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Worker threads for per-chip stages; 0 uses every core.
    pub workers: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { workers: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    /// Global seed; every random stream of the study derives from it.
    pub seed: u64,
    pub gen: GenSection,
    pub fab: FabConfig,
    pub activity: ActivitySection,
    pub aging: AgingSection,
    pub cfst: CfstConfig,
    pub detector: DetectorSection,
    pub chips: ChipsSection,
    pub run: RunSection,
}

/// The default configuration, with every key documented.
pub const DEFAULT_CONFIG: &str = r#"# agewise campaign configuration

seed = 0                  # global seed; netlist, fab snapshot, activity, chips and splits derive from it

[gen]
num_ffs = 64              # flip-flops (one logic cone each)
gates_per_cone = 48       # gates per cone
depth = 24                # logic depth of each cone's main chain
guardband_fraction = 0.1  # clock period margin over the critical path
idle_fraction = 0.5       # share of cones fed by constant configuration registers

[fab]
sigma_r = 0.03                # per-instance random variation (relative std)
sigma_s = 0.02                # per-chip systematic variation (relative std)
truncate_sigmas = 3.0         # variations are truncated at this many std
drift_gate = [0.9, 1.0]       # range of per-cell drift factors
drift_layer = [0.9, 1.05]     # range of per-layer wire drift factors

[activity]
cycles = 10000            # simulated cycles per activity profile

[aging]
temperature_c = 125.0     # stress temperature
vdd = 0.85                # supply voltage (V)

[cfst]
f_max_ghz = 4.0           # fastest tester clock
step_ps = 10.0            # period step of the sweep
# start_period_ps = 2000  # first swept period; the design period when unset

[detector]
horizon_months = 12.0     # age at which path aging is predicted for MAP/LAP
th_ps = 10.0              # verdict threshold on the mean shift
paths_per_endpoint = 10   # longest paths kept per capture flip-flop

[chips]
counts = [20, 2, 2, 2, 2, 2, 2, 2, 2, 1, 1, 1, 1]  # chips aged 0, 1, ..., 12 months

[run]
workers = 0               # threads for per-chip work; 0 = all cores
"#;

fn parse_scalar(text: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {text}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

impl CampaignConfig {
    /// Parses a config file and applies `key=value` overrides, where `key`
    /// is a dotted path such as `fab.sigma_r`.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CampaignError::Config(e.to_string()))?;
        for o in overrides {
            let (key, value) =
                o.split_once('=').ok_or_else(|| CampaignError::Config(format!("override `{o}` is not key=value")))?;
            let parts: Vec<&str> = key.trim().split('.').collect();
            let mut t = &mut table;
            for p in &parts[..parts.len() - 1] {
                t = t
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| CampaignError::Config(format!("`{p}` in `{key}` is not a section")))?;
            }
            t.insert(parts[parts.len() - 1].to_string(), parse_scalar(value.trim()));
        }
        let cfg: CampaignConfig = table.try_into().map_err(|e: toml::de::Error| CampaignError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(CampaignError::Config(m));
        self.fab.check().map_err(|e| CampaignError::Config(e.to_string()))?;
        if self.activity.cycles == 0 {
            return bad("activity.cycles must be positive".into());
        }
        if self.chips.counts.len() > MAX_MONTHS + 1 {
            return bad(format!("chips.counts covers ages 0..{}; at most 13 entries", self.chips.counts.len() - 1));
        }
        if !(self.detector.th_ps > 0.0) {
            return bad(format!("detector.th_ps must be positive, got {}", self.detector.th_ps));
        }
        if !(self.detector.horizon_months > 0.0) {
            return bad("detector.horizon_months must be positive".into());
        }
        if self.detector.paths_per_endpoint == 0 {
            return bad("detector.paths_per_endpoint must be positive".into());
        }
        if !(self.aging.vdd > CellLibrary::default().vth0) {
            return bad(format!("aging.vdd {} must exceed the threshold voltage", self.aging.vdd));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        Seeds(self.seed)
    }

    pub fn gen_spec(&self) -> GenSpec {
        GenSpec {
            num_ffs: self.gen.num_ffs,
            gates_per_cone: self.gen.gates_per_cone,
            depth: self.gen.depth,
            seed: self.seeds().netlist(),
            guardband_fraction: self.gen.guardband_fraction,
            idle_fraction: self.gen.idle_fraction,
        }
    }

    pub fn conditions(&self, months: f64) -> AgingConditions {
        AgingConditions { months, temperature_c: self.aging.temperature_c, vdd: self.aging.vdd }
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            horizon_months: self.detector.horizon_months,
            th_ps: self.detector.th_ps,
            split_seed: self.seeds().split(),
            ..DetectorConfig::default()
        }
    }

    /// Every chip of the matrix, fresh ones first.
    pub fn plan(&self) -> Vec<ChipPlan> {
        let mut out = Vec::new();
        for (months, &n) in self.chips.counts.iter().enumerate() {
            for _ in 0..n {
                let index = out.len();
                out.push(ChipPlan { index, id: format!("c{index:03}"), months: months as f64 });
            }
        }
        out
    }

    pub fn chip(&self, id: &str) -> Result<ChipPlan> {
        self.plan()
            .into_iter()
            .find(|c| c.id == id)
            .ok_or_else(|| CampaignError::Config(format!("chip `{id}` is not in the chip matrix")))
    }
}

/// Seed streams derived from the global seed.
#[derive(Clone, Copy, Debug)]
pub struct Seeds(pub u64);

impl Seeds {
    pub fn netlist(self) -> u64 {
        seeds::child(self.0, 1)
    }
    pub fn snapshot(self) -> u64 {
        seeds::child(self.0, 2)
    }
    pub fn reference_activity(self) -> u64 {
        seeds::child(self.0, 3)
    }
    pub fn chip(self, index: usize) -> u64 {
        seeds::child(seeds::child(self.0, 4), index as u64)
    }
    pub fn usage_activity(self, index: usize) -> u64 {
        seeds::child(seeds::child(self.0, 5), index as u64)
    }
    pub fn split(self) -> u64 {
        seeds::child(self.0, 6)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChipPlan {
    pub index: usize,
    pub id: String,
    pub months: f64,
}

// ------------------------------------------------------------------- files

pub fn design_dir(out: &Path) -> PathBuf {
    out.join("design")
}

pub fn chip_dir(out: &Path, id: &str) -> PathBuf {
    out.join("chips").join(id)
}

pub fn report_dir(out: &Path) -> PathBuf {
    out.join("report")
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CampaignError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CampaignError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, text).map_err(|source| CampaignError::Io { path: path.to_path_buf(), source })
}

fn remove_if_present(path: &Path) -> Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => {
            Err(CampaignError::Io { path: path.to_path_buf(), source: e })
        }
        _ => Ok(()),
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s
}

/// The design and everything derived from it without randomness.
pub struct Design {
    pub netlist: Netlist,
    pub graph: TimingGraph,
    pub paths: Vec<TimingPath>,
    pub features: Vec<FeatureVector>,
}

impl Design {
    pub fn new(netlist: Netlist, paths_per_endpoint: usize) -> Result<Self> {
        let graph = TimingGraph::elaborate(&netlist, &CellLibrary::default()).map_err(stage("sta"))?;
        let paths = graph.enumerate_paths(paths_per_endpoint);
        Design::with_paths(netlist, graph, paths)
    }

    fn with_paths(netlist: Netlist, graph: TimingGraph, paths: Vec<TimingPath>) -> Result<Self> {
        let features = extract_all(&graph, &paths).map_err(stage("features"))?;
        Ok(Design { netlist, graph, paths, features })
    }

    /// Loads the netlist and, when present, the path list of a run directory.
    pub fn load(out: &Path, paths_per_endpoint: usize) -> Result<Self> {
        let p = design_dir(out).join("netlist.nlf");
        let netlist = parse_netlist(&read(&p)?).map_err(format_err(&p))?;
        let pp = design_dir(out).join("paths.paths");
        if !pp.exists() {
            return Design::new(netlist, paths_per_endpoint);
        }
        let graph = TimingGraph::elaborate(&netlist, &CellLibrary::default()).map_err(stage("sta"))?;
        let paths = graph.parse_paths(&read(&pp)?).map_err(format_err(&pp))?;
        Design::with_paths(netlist, graph, paths)
    }

    pub fn table(&self) -> PathTable<'_> {
        PathTable::new(&self.paths, &self.features)
    }
}

// ---------------------------------------------------------------- commands

/// Loads `--config` if given, else `<out>/config.toml` if present, else the
/// defaults; then applies overrides and the `--seed` flag.
pub fn load_config(config: Option<&Path>, out: &Path, seed: Option<u64>, overrides: &[String]) -> Result<CampaignConfig> {
    let saved = out.join("config.toml");
    let text = match config {
        Some(p) => read(p)?,
        None if saved.exists() => read(&saved)?,
        None => DEFAULT_CONFIG.to_string(),
    };
    let mut cfg = CampaignConfig::parse(&text, overrides)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Generates the design netlist and records the effective config.
pub fn cmd_gen(cfg: &CampaignConfig, out: &Path) -> Result<Netlist> {
    let nl = generate_netlist(&cfg.gen_spec(), &CellLibrary::default()).map_err(stage("gen"))?;
    write(&out.join("config.toml"), &cfg.to_toml())?;
    write(&design_dir(out).join("netlist.nlf"), &nl.emit())?;
    Ok(nl)
}

/// Simulates the design-time reference activity, or a chip's field usage
/// when `chip` is given.
pub fn cmd_activity(cfg: &CampaignConfig, out: &Path, chip: Option<&str>) -> Result<ActivityProfile> {
    let p = design_dir(out).join("netlist.nlf");
    let nl = parse_netlist(&read(&p)?).map_err(format_err(&p))?;
    let (seed, dest) = match chip {
        None => (cfg.seeds().reference_activity(), design_dir(out).join("reference.act")),
        Some(id) => {
            let c = cfg.chip(id)?;
            (cfg.seeds().usage_activity(c.index), chip_dir(out, id).join("usage.act"))
        }
    };
    let act = simulate_activity(&nl, cfg.activity.cycles, seed).map_err(stage("activity"))?;
    write(&dest, &act.emit())?;
    Ok(act)
}

pub fn fab_model(cfg: &CampaignConfig) -> Result<FabModel> {
    sample_fab_model(&cfg.fab, cfg.seeds().snapshot()).map_err(stage("fab"))
}

pub fn cmd_fab(cfg: &CampaignConfig, out: &Path, id: &str) -> Result<ChipInstance> {
    let design = Design::load(out, cfg.detector.paths_per_endpoint)?;
    let plan = cfg.chip(id)?;
    let chip = fabricate(&design.graph, &fab_model(cfg)?, id, cfg.seeds().chip(plan.index)).map_err(stage("fab"))?;
    write(&chip_dir(out, id).join("fresh.chip"), &chip.emit())?;
    Ok(chip)
}

/// Ages a fabricated chip under its usage activity for `months` (the chip
/// matrix entry when None).
pub fn cmd_age(cfg: &CampaignConfig, out: &Path, id: &str, months: Option<f64>) -> Result<ChipInstance> {
    let design = Design::load(out, cfg.detector.paths_per_endpoint)?;
    let plan = cfg.chip(id)?;
    let dir = chip_dir(out, id);
    let fp = dir.join("fresh.chip");
    let fresh = ChipInstance::parse(&read(&fp)?).map_err(format_err(&fp))?;
    let ap = dir.join("usage.act");
    let usage = parse_activity(&read(&ap)?).map_err(format_err(&ap))?;
    let months = months.unwrap_or(plan.months);
    let aged = age_chip(
        &design.graph,
        &fresh,
        &usage,
        Some(cfg.seeds().usage_activity(plan.index)),
        &cfg.conditions(months),
        &AgingPhysics::default(),
    )
    .map_err(stage("age"))?;
    write(&dir.join("aged.chip"), &aged.emit())?;
    Ok(aged)
}

/// The chip as it arrives at the tester: aged if an aged dump exists.
fn load_chip(out: &Path, id: &str) -> Result<ChipInstance> {
    let dir = chip_dir(out, id);
    let p = if dir.join("aged.chip").exists() { dir.join("aged.chip") } else { dir.join("fresh.chip") };
    ChipInstance::parse(&read(&p)?).map_err(format_err(&p))
}

pub fn cmd_cfst(cfg: &CampaignConfig, out: &Path, id: &str) -> Result<CfstMeasurement> {
    cfg.chip(id)?;
    let design = Design::load(out, cfg.detector.paths_per_endpoint)?;
    let chip = load_chip(out, id)?;
    let m = cfst_measure(&design.graph, &chip, &design.paths, &cfg.cfst).map_err(stage("cfst"))?;
    write(&chip_dir(out, id).join("measure.cfst"), &m.emit())?;
    Ok(m)
}

/// Fits the gate aging model over the full toggle range of `cycles`.
pub fn fit_reference_model(cfg: &CampaignConfig) -> Result<GateAgeModel> {
    let c = cfg.activity.cycles;
    let db = build_gate_aging_db(
        &CellLibrary::default(),
        0,
        c,
        c,
        &cfg.conditions(MAX_MONTHS as f64),
        &AgingPhysics::default(),
    )
    .map_err(stage("adp"))?;
    fit_gate_age_model(&db).map_err(stage("adp"))
}

/// Enumerates paths and splits them into MAP and LAP. Fits the gate aging
/// model unless one is supplied.
pub fn cmd_adp(cfg: &CampaignConfig, out: &Path, model: Option<&GateAgeModel>) -> Result<AdpSets> {
    let p = design_dir(out).join("netlist.nlf");
    let nl = parse_netlist(&read(&p)?).map_err(format_err(&p))?;
    let design = Design::new(nl, cfg.detector.paths_per_endpoint)?;
    let ap = design_dir(out).join("reference.act");
    let reference = parse_activity(&read(&ap)?).map_err(format_err(&ap))?;
    let fitted;
    let model = match model {
        Some(m) => m,
        None => {
            fitted = fit_reference_model(cfg)?;
            &fitted
        }
    };
    let adp = identify_adp(&design.graph, &design.paths, model, &reference, &cfg.cfst, &cfg.detector_config())
        .map_err(stage("adp"))?;
    write(&design_dir(out).join("paths.paths"), &design.graph.emit_paths(&design.paths))?;
    write(&design_dir(out).join("adp.json"), &json(&adp))?;
    Ok(adp)
}

fn load_adp(out: &Path) -> Result<AdpSets> {
    let p = design_dir(out).join("adp.json");
    serde_json::from_str(&read(&p)?).map_err(format_err(&p))
}

/// Outcome of one chip's detection run.
#[derive(Clone, Debug, PartialEq)]
pub enum ChipResult {
    Detected(DetectionReport),
    Failed(FailedDetection),
}

impl ChipResult {
    pub fn report(&self) -> Option<&DetectionReport> {
        match self {
            ChipResult::Detected(r) => Some(r),
            ChipResult::Failed(_) => None,
        }
    }
}

/// Detection on already-loaded artifacts; also returns the GTM training set.
pub fn detect_chip(
    design: &Design,
    adp: &AdpSets,
    meas: &CfstMeasurement,
    id: &str,
    cfg: &DetectorConfig,
) -> (ChipResult, Option<String>) {
    let table = design.table();
    let run = || -> std::result::Result<(DetectionReport, String), DetectError> {
        let (report, gtm) = detect_with_gtm(id, &table, adp, meas, cfg)?;
        Ok((report, dataset_to_csv(&samples(&table, meas, &gtm.train)?)))
    };
    match run() {
        Ok((r, data)) => (ChipResult::Detected(r), Some(data)),
        Err(e) => (ChipResult::Failed(FailedDetection::new(id, &e)), None),
    }
}

fn write_detection(dir: &Path, result: &ChipResult, dataset: Option<&str>) -> Result<()> {
    let stale = match result {
        ChipResult::Detected(r) => {
            write(&dir.join("report.json"), &(r.to_json() + "\n"))?;
            "failed.json"
        }
        ChipResult::Failed(f) => {
            write(&dir.join("failed.json"), &json(f))?;
            "report.json"
        }
    };
    remove_if_present(&dir.join(stale))?;
    match dataset {
        Some(d) => write(&dir.join("dataset.csv"), d),
        None => remove_if_present(&dir.join("dataset.csv")),
    }
}

pub fn cmd_detect(cfg: &CampaignConfig, out: &Path, id: &str) -> Result<ChipResult> {
    cfg.chip(id)?;
    let design = Design::load(out, cfg.detector.paths_per_endpoint)?;
    let adp = load_adp(out)?;
    let p = chip_dir(out, id).join("measure.cfst");
    let meas = CfstMeasurement::parse(&read(&p)?).map_err(format_err(&p))?;
    let (result, data) = detect_chip(&design, &adp, &meas, id, &cfg.detector_config());
    write_detection(&chip_dir(out, id), &result, data.as_deref())?;
    Ok(result)
}

/// One chip of a finished campaign.
#[derive(Clone, Debug, PartialEq)]
pub struct ChipOutcome {
    pub plan: ChipPlan,
    pub result: ChipResult,
}

pub struct CampaignOutcome {
    pub adp: AdpSets,
    pub chips: Vec<ChipOutcome>,
}

struct ChipArtifacts {
    fresh: ChipInstance,
    usage: Option<ActivityProfile>,
    aged: Option<ChipInstance>,
    meas: CfstMeasurement,
    result: ChipResult,
    dataset: Option<String>,
}

fn run_chip(cfg: &CampaignConfig, design: &Design, fab: &FabModel, adp: &AdpSets, plan: &ChipPlan) -> Result<ChipArtifacts> {
    let s = cfg.seeds();
    let fresh = fabricate(&design.graph, fab, &plan.id, s.chip(plan.index)).map_err(stage("fab"))?;
    let (usage, aged) = if plan.months > 0.0 {
        let seed = s.usage_activity(plan.index);
        let usage = simulate_activity(&design.netlist, cfg.activity.cycles, seed).map_err(stage("activity"))?;
        let aged = age_chip(&design.graph, &fresh, &usage, Some(seed), &cfg.conditions(plan.months), &AgingPhysics::default())
            .map_err(stage("age"))?;
        (Some(usage), Some(aged))
    } else {
        (None, None)
    };
    let tested = aged.as_ref().unwrap_or(&fresh);
    let meas = cfst_measure(&design.graph, tested, &design.paths, &cfg.cfst).map_err(stage("cfst"))?;
    let (result, dataset) = detect_chip(design, adp, &meas, &plan.id, &cfg.detector_config());
    match &result {
        ChipResult::Detected(r) => log::info!("{} ({} months): MS {:.2} ps, {}", plan.id, plan.months, r.ms_ps, r.verdict),
        ChipResult::Failed(f) => log::warn!("{} ({} months): failed at {}: {}", plan.id, plan.months, f.stage, f.cause),
    }
    Ok(ChipArtifacts { fresh, usage, aged, meas, result, dataset })
}

fn write_chip(out: &Path, plan: &ChipPlan, a: &ChipArtifacts) -> Result<()> {
    let dir = chip_dir(out, &plan.id);
    write(&dir.join("fresh.chip"), &a.fresh.emit())?;
    match (&a.usage, &a.aged) {
        (Some(u), Some(c)) => {
            write(&dir.join("usage.act"), &u.emit())?;
            write(&dir.join("aged.chip"), &c.emit())?;
        }
        _ => {
            remove_if_present(&dir.join("usage.act"))?;
            remove_if_present(&dir.join("aged.chip"))?;
        }
    }
    write(&dir.join("measure.cfst"), &a.meas.emit())?;
    write_detection(&dir, &a.result, a.dataset.as_deref())
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(stage("campaign"))
}

/// Runs every stage for every chip of the matrix, then the report. A gate
/// aging model fitted for the same cycle count may be passed in to skip
/// the fit.
pub fn cmd_campaign(cfg: &CampaignConfig, out: &Path, model: Option<&GateAgeModel>) -> Result<CampaignOutcome> {
    cfg.check()?;
    let nl = cmd_gen(cfg, out)?;
    cmd_activity(cfg, out, None)?;
    let adp = cmd_adp(cfg, out, model)?;
    let design = Design::load(out, cfg.detector.paths_per_endpoint)?;
    debug_assert_eq!(design.netlist, nl);
    let fab = fab_model(cfg)?;
    let plan = cfg.plan();
    log::info!("campaign: {} chips, MAP {} LAP {}", plan.len(), adp.map.len(), adp.lap.len());
    let done: Vec<Result<ChipArtifacts>> =
        pool(cfg.run.workers)?.install(|| plan.par_iter().map(|p| run_chip(cfg, &design, &fab, &adp, p)).collect());
    let mut chips = Vec::with_capacity(plan.len());
    for (p, a) in plan.iter().zip(done) {
        let a = a?;
        write_chip(out, p, &a)?;
        chips.push(ChipOutcome { plan: p.clone(), result: a.result });
    }
    cmd_report(out)?;
    Ok(CampaignOutcome { adp, chips })
}

// ------------------------------------------------------------------ report

/// One row of the per-age summary.
#[derive(Clone, Debug, PartialEq)]
pub struct AgeRow {
    pub months: f64,
    pub chips: usize,
    pub failed: usize,
    pub aged_verdicts: usize,
    pub mean_ad_map: f64,
    pub mean_ad_lap: f64,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

pub fn summarize(chips: &[ChipOutcome]) -> Vec<AgeRow> {
    let mut ages: Vec<f64> = chips.iter().map(|c| c.plan.months).collect();
    ages.sort_by(f64::total_cmp);
    ages.dedup();
    ages.into_iter()
        .map(|months| {
            let group: Vec<&ChipOutcome> = chips.iter().filter(|c| c.plan.months == months).collect();
            let reports: Vec<&DetectionReport> = group.iter().filter_map(|c| c.result.report()).collect();
            let mean = |f: &dyn Fn(&DetectionReport) -> f64| {
                if reports.is_empty() {
                    f64::NAN
                } else {
                    reports.iter().map(|r| f(r)).sum::<f64>() / reports.len() as f64
                }
            };
            AgeRow {
                months,
                chips: group.len(),
                failed: group.len() - reports.len(),
                aged_verdicts: reports.iter().filter(|r| r.verdict == Verdict::Aged).count(),
                mean_ad_map: mean(&|r| r.mean_ad_map),
                mean_ad_lap: mean(&|r| r.mean_ad_lap),
                mean_ms: mean(&|r| r.ms_ps),
                min_ms: reports.iter().map(|r| r.ms_ps).fold(f64::INFINITY, f64::min),
                max_ms: reports.iter().map(|r| r.ms_ps).fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

/// Reads every chip's result back from a run directory.
pub fn load_outcomes(out: &Path) -> Result<Vec<ChipOutcome>> {
    let root = out.join("chips");
    let entries = fs::read_dir(&root).map_err(|source| CampaignError::Io { path: root.clone(), source })?;
    let mut ids: Vec<String> = entries.filter_map(|e| e.ok()).filter_map(|e| e.file_name().into_string().ok()).collect();
    ids.sort();
    let mut chips = Vec::new();
    for id in ids {
        let dir = root.join(&id);
        let chip = load_chip(out, &id)?;
        let rp = dir.join("report.json");
        let fp = dir.join("failed.json");
        let result = if rp.exists() {
            ChipResult::Detected(DetectionReport::from_json(&read(&rp)?).map_err(format_err(&rp))?)
        } else if fp.exists() {
            ChipResult::Failed(serde_json::from_str(&read(&fp)?).map_err(format_err(&fp))?)
        } else {
            return Err(CampaignError::Stage { stage: "report", msg: format!("chip `{id}` has no detection result") });
        };
        let index = chips.len();
        chips.push(ChipOutcome { plan: ChipPlan { index, id, months: chip.age_months }, result });
    }
    if chips.is_empty() {
        return Err(CampaignError::Stage { stage: "report", msg: format!("no chips under {}", root.display()) });
    }
    Ok(chips)
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.2}")
    } else {
        "-".into()
    }
}

pub fn summary_csv(rows: &[AgeRow]) -> String {
    let mut s = String::from("months,chips,failed,aged_verdicts,mean_ad_map_ps,mean_ad_lap_ps,mean_ms_ps,min_ms_ps,max_ms_ps\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.months, r.chips, r.failed, r.aged_verdicts, r.mean_ad_map, r.mean_ad_lap, r.mean_ms, r.min_ms, r.max_ms
        );
    }
    s
}

pub fn summary_text(rows: &[AgeRow], th_ps: f64) -> String {
    let mut s = format!("{:>6} {:>5} {:>8} {:>10} {:>10} {:>9}  verdict (Th = {th_ps} ps)\n", "months", "chips", "failed", "MAP", "LAP", "MS");
    for r in rows {
        let valid = r.chips - r.failed;
        let verdict = if valid == 0 {
            "-".to_string()
        } else if r.aged_verdicts == valid {
            "aged".to_string()
        } else if r.aged_verdicts == 0 {
            "new".to_string()
        } else {
            format!("aged {}/{}", r.aged_verdicts, valid)
        };
        let _ = writeln!(
            s,
            "{:>6} {:>5} {:>8} {:>10} {:>10} {:>9}  {verdict}",
            r.months,
            r.chips,
            r.failed,
            cell(r.mean_ad_map),
            cell(r.mean_ad_lap),
            cell(r.mean_ms)
        );
    }
    s
}

pub fn chips_csv(chips: &[ChipOutcome]) -> String {
    let mut s = String::from("chip_id,months,valid,n,m,mean_ad_map_ps,mean_ad_lap_ps,ms_ps,th_ps,verdict,stage,cause\n");
    for c in chips {
        match &c.result {
            ChipResult::Detected(r) => {
                let _ = writeln!(
                    s,
                    "{},{},true,{},{},{},{},{},{},{},,",
                    r.chip_id, c.plan.months, r.n, r.m, r.mean_ad_map, r.mean_ad_lap, r.ms_ps, r.th_ps, r.verdict
                );
            }
            ChipResult::Failed(f) => {
                let cause = f.cause.replace(',', ";");
                let _ = writeln!(s, "{},{},false,,,,,,,,{},{cause}", f.chip_id, c.plan.months, f.stage);
            }
        }
    }
    s
}

/// Writes the per-age summary and per-chip histogram data of a run.
pub fn cmd_report(out: &Path) -> Result<Vec<AgeRow>> {
    let chips = load_outcomes(out)?;
    let rows = summarize(&chips);
    let th = chips.iter().filter_map(|c| c.result.report()).map(|r| r.th_ps).next().unwrap_or(f64::NAN);
    let dir = report_dir(out);
    write(&dir.join("summary.txt"), &summary_text(&rows, th))?;
    write(&dir.join("summary.csv"), &summary_csv(&rows))?;
    write(&dir.join("chips.csv"), &chips_csv(&chips))?;
    for c in &chips {
        if let Some(r) = c.result.report() {
            write(&dir.join("histograms").join(format!("{}.csv", c.plan.id)), &r.histogram_csv())?;
        }
    }
    Ok(rows)
}
