// SPDX-License-Identifier: Apache-2.0

//! Fabricated chip instances: process drift, systematic and random process
//! variation, and ground-truth aging applied to per-arc delays.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aging::{AgingConditions, AgingError, AgingPhysics};
use crate::library::{Drive, GateType, Layer};
use crate::netlist::ActivityProfile;
use crate::seeds;
use crate::sta::{ArcKind, Inst, TimingGraph};

#[derive(Debug, Error, PartialEq)]
pub enum FabError {
    #[error("arc {arc} has non-positive delay {delay} ps")]
    NonPositive { arc: usize, delay: f64 },
    #[error("chip `{0}` is already aged")]
    AlreadyAged(String),
    #[error("invalid fab configuration: {0}")]
    Config(String),
    #[error("chip dump line {line}: {msg}")]
    Dump { line: usize, msg: String },
    #[error(transparent)]
    Aging(#[from] AgingError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FabConfig {
    /// Per-instance random variation (relative standard deviation).
    pub sigma_r: f64,
    /// Per-chip systematic variation per gate type and per layer.
    pub sigma_s: f64,
    /// Truncation of both variations, in standard deviations.
    pub truncate_sigmas: f64,
    /// Uniform range of the per (gate type, drive) drift factor.
    pub drift_gate: [f64; 2],
    /// Uniform range of the per-layer wire drift factor.
    pub drift_layer: [f64; 2],
}

impl Default for FabConfig {
    fn default() -> Self {
        FabConfig { sigma_r: 0.03, sigma_s: 0.02, truncate_sigmas: 3.0, drift_gate: [0.90, 1.00], drift_layer: [0.90, 1.05] }
    }
}

impl FabConfig {
    /// No drift and no variation.
    pub fn ideal() -> Self {
        FabConfig { sigma_r: 0.0, sigma_s: 0.0, truncate_sigmas: 3.0, drift_gate: [1.0, 1.0], drift_layer: [1.0, 1.0] }
    }

    pub fn check(&self) -> Result<(), FabError> {
        if !(self.sigma_r >= 0.0 && self.sigma_s >= 0.0) {
            return Err(FabError::Config("sigmas must be non-negative".into()));
        }
        for (name, r) in [("drift_gate", self.drift_gate), ("drift_layer", self.drift_layer)] {
            if !(r[0] > 0.0 && r[0] <= r[1]) {
                return Err(FabError::Config(format!("{name} range {r:?} must be positive and ordered")));
            }
        }
        Ok(())
    }
}

/// One process snapshot: drift tables plus the variation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FabModel {
    pub config: FabConfig,
    pub snapshot_seed: u64,
    /// Indexed [gate type][drive].
    pub drift_gate: [[f64; 6]; 7],
    pub drift_layer: [f64; 5],
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// Draws N(1, sigma) truncated to +-k sigma by rejection.
fn truncated(rng: &mut ChaCha8Rng, sigma: f64, k: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let n = Normal::new(1.0, sigma).expect("finite sigma");
    loop {
        let v: f64 = n.sample(rng);
        if (v - 1.0).abs() <= k * sigma {
            return v;
        }
    }
}

pub fn sample_fab_model(config: &FabConfig, snapshot_seed: u64) -> Result<FabModel, FabError> {
    config.check()?;
    let mut rng = seeds::rng(seeds::child(snapshot_seed, 0x6472_6966));
    let mut drift_gate = [[1.0; 6]; 7];
    for row in drift_gate.iter_mut() {
        for v in row.iter_mut() {
            *v = uniform(&mut rng, config.drift_gate);
        }
    }
    let mut drift_layer = [1.0; 5];
    for v in drift_layer.iter_mut() {
        *v = uniform(&mut rng, config.drift_layer);
    }
    Ok(FabModel { config: config.clone(), snapshot_seed, drift_gate, drift_layer })
}

/// Activity an instance experienced in the field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stress {
    pub inst: String,
    pub dc: f64,
    pub tc: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChipInstance {
    pub chip_id: String,
    pub age_months: f64,
    pub snapshot_seed: u64,
    pub chip_seed: u64,
    pub activity_seed: Option<u64>,
    /// Cycles of the activity window behind `stress`; 0 when unaged.
    pub cycles: u64,
    pub stress: Vec<Stress>,
    /// True delay of every timing arc (ps), indexed by arc id.
    pub arc_delays: Vec<f64>,
}

fn cell_key(graph: &TimingGraph, inst: Inst) -> (GateType, Drive) {
    graph.inst_cell(inst)
}

/// Fabricates one chip of a snapshot. Cell arcs scale by drift(type, drive)
/// x systematic(type) x random(instance); wire segments by drift(layer) x
/// systematic(layer).
pub fn fabricate(graph: &TimingGraph, fab: &FabModel, chip_id: &str, chip_seed: u64) -> Result<ChipInstance, FabError> {
    let cfg = &fab.config;
    let mut rng = seeds::rng(seeds::child(seeds::child(fab.snapshot_seed, 0x6368_6970), chip_seed));
    let sys_gate: Vec<f64> = (0..7).map(|_| truncated(&mut rng, cfg.sigma_s, cfg.truncate_sigmas)).collect();
    let sys_layer: Vec<f64> = (0..5).map(|_| truncated(&mut rng, cfg.sigma_s, cfg.truncate_sigmas)).collect();
    let insts = graph.instances();
    let mut rnd = std::collections::HashMap::with_capacity(insts.len());
    for &i in &insts {
        rnd.insert(i, truncated(&mut rng, cfg.sigma_r, cfg.truncate_sigmas));
    }
    let mut delays = Vec::with_capacity(graph.arcs.len());
    for (ai, arc) in graph.arcs.iter().enumerate() {
        let d = match arc.kind {
            ArcKind::Cell(inst) => {
                let (g, dr) = cell_key(graph, inst);
                arc.delay * fab.drift_gate[g.index()][dr.index()] * sys_gate[g.index()] * rnd[&inst]
            }
            ArcKind::Wire(net) => graph
                .wire_segments(net)
                .map(|(l, len)| graph.lib.wire_delay(l, len) * fab.drift_layer[l.index()] * sys_layer[l.index()])
                .sum(),
        };
        if !(d > 0.0 && d.is_finite()) {
            return Err(FabError::NonPositive { arc: ai, delay: d });
        }
        delays.push(d);
    }
    Ok(ChipInstance {
        chip_id: chip_id.to_string(),
        age_months: 0.0,
        snapshot_seed: fab.snapshot_seed,
        chip_seed,
        activity_seed: None,
        cycles: 0,
        stress: Vec::new(),
        arc_delays: delays,
    })
}

/// Ages a fresh chip with the ground-truth oracle: every cell arc grows by
/// its fabricated delay times the relative shift for the instance's stress.
pub fn age_chip(
    graph: &TimingGraph,
    chip: &ChipInstance,
    activity: &ActivityProfile,
    activity_seed: Option<u64>,
    cond: &AgingConditions,
    physics: &AgingPhysics,
) -> Result<ChipInstance, FabError> {
    if chip.age_months != 0.0 {
        return Err(FabError::AlreadyAged(chip.chip_id.clone()));
    }
    let mut out = chip.clone();
    out.age_months = cond.months;
    out.activity_seed = activity_seed;
    out.cycles = activity.cycles;
    let mut rel = std::collections::HashMap::new();
    for inst in graph.instances() {
        let net = graph.inst_output(inst);
        let a = activity.get(net).ok_or_else(|| AgingError::MissingActivity(net.to_string()))?;
        let dv = physics.delta_vth(a.dc, activity.tc_rate(a), cond)?;
        rel.insert(inst, physics.sensitivity(dv, cond, &graph.lib)?);
        out.stress.push(Stress { inst: graph.inst_name(inst).to_string(), dc: a.dc, tc: a.tc });
    }
    for (d, arc) in out.arc_delays.iter_mut().zip(&graph.arcs) {
        if let ArcKind::Cell(inst) = arc.kind {
            *d += *d * rel[&inst];
        }
    }
    Ok(out)
}

impl ChipInstance {
    /// Renders the `.chip` dump.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "chip {}", self.chip_id);
        let act = self.activity_seed.map_or("-".to_string(), |v| v.to_string());
        let _ = writeln!(s, "seeds snapshot={} chip={} activity={act}", self.snapshot_seed, self.chip_seed);
        let _ = writeln!(s, "age {}", self.age_months);
        let _ = writeln!(s, "cycles {}", self.cycles);
        for st in &self.stress {
            let _ = writeln!(s, "stress {} dc={} tc={}", st.inst, st.dc, st.tc);
        }
        for (i, d) in self.arc_delays.iter().enumerate() {
            let _ = writeln!(s, "arc {i} {d}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<ChipInstance, FabError> {
        let mut chip = ChipInstance {
            chip_id: String::new(),
            age_months: 0.0,
            snapshot_seed: 0,
            chip_seed: 0,
            activity_seed: None,
            cycles: 0,
            stress: Vec::new(),
            arc_delays: Vec::new(),
        };
        let mut seen_id = false;
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            let bad = |msg: String| FabError::Dump { line: ln, msg };
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let t: Vec<&str> = body.split_whitespace().collect();
            let kv = |tok: &str, key: &str| -> Result<String, FabError> {
                tok.strip_prefix(key).map(str::to_string).ok_or_else(|| bad(format!("expected `{key}...`, found `{tok}`")))
            };
            match t.as_slice() {
                ["chip", id] => {
                    chip.chip_id = id.to_string();
                    seen_id = true;
                }
                ["seeds", s, c, a] => {
                    chip.snapshot_seed = kv(s, "snapshot=")?.parse().map_err(|_| bad("bad snapshot seed".into()))?;
                    chip.chip_seed = kv(c, "chip=")?.parse().map_err(|_| bad("bad chip seed".into()))?;
                    let a = kv(a, "activity=")?;
                    chip.activity_seed =
                        if a == "-" { None } else { Some(a.parse().map_err(|_| bad("bad activity seed".into()))?) };
                }
                ["age", m] => chip.age_months = m.parse().map_err(|_| bad(format!("bad age `{m}`")))?,
                ["cycles", n] => chip.cycles = n.parse().map_err(|_| bad(format!("bad cycle count `{n}`")))?,
                ["stress", inst, dc, tc] => chip.stress.push(Stress {
                    inst: inst.to_string(),
                    dc: kv(dc, "dc=")?.parse().map_err(|_| bad("bad dc".into()))?,
                    tc: kv(tc, "tc=")?.parse().map_err(|_| bad("bad tc".into()))?,
                }),
                ["arc", id, d] => {
                    let id: usize = id.parse().map_err(|_| bad(format!("bad arc id `{id}`")))?;
                    if id != chip.arc_delays.len() {
                        return Err(bad(format!("arc {id} out of order")));
                    }
                    let d: f64 = d.parse().map_err(|_| bad(format!("bad delay `{d}`")))?;
                    if !(d > 0.0 && d.is_finite()) {
                        return Err(FabError::NonPositive { arc: id, delay: d });
                    }
                    chip.arc_delays.push(d);
                }
                _ => return Err(bad(format!("unrecognized line `{body}`"))),
            }
        }
        if !seen_id {
            return Err(FabError::Dump { line: 0, msg: "missing `chip` header".into() });
        }
        Ok(chip)
    }
}

/// Ideal-world check helper: every layer present in the model.
pub fn layer_factor(fab: &FabModel, layer: Layer) -> f64 {
    fab.drift_layer[layer.index()]
}
