// SPDX-License-Identifier: Apache-2.0

//! The 38 layout and timing features of a path, and the training dataset CSV.

use std::fmt::Write as _;

use crate::library::{Drive, Layer};
use crate::sta::{ArcKind, Inst, TimingGraph, TimingPath};

pub const NUM_FEATURES: usize = 38;

pub type FeatureVector = [f64; NUM_FEATURES];

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "lp_m1_um", "lp_m2_um", "lp_m3_um", "lp_m4_um",
    "dp_m1_um", "dp_m2_um", "dp_m3_um", "dp_m4_um",
    "cp_m1_um", "cp_m2_um", "cp_m3_um", "cp_m4_um",
    "dp_m5_um",
    "lp_cells", "dp_cells", "cp_cells",
    "lp_x0", "lp_x1", "lp_x2", "lp_x4", "lp_x8",
    "dp_x0", "dp_x1", "dp_x2", "dp_x4", "dp_x8",
    "cp_x0", "cp_x1", "cp_x2", "cp_x4", "cp_x8",
    "dp_x16",
    "setup_ps", "lp_delay_ps", "dp_delay_ps", "cp_delay_ps", "sta_delay_ps",
    "fanout_total",
];

// column offsets
const WIRE: usize = 0;
const DP_M5: usize = 12;
const CELLS: usize = 13;
const DRIVES: usize = 16;
const DP_X16: usize = 31;
const SETUP: usize = 32;
const FANOUT: usize = 37;

#[derive(Clone, Copy)]
enum Part {
    Lp = 0,
    Dp = 1,
    Cp = 2,
}

/// Features of one path. Cell counts and drive counts cover logic gates and
/// clock buffers; the launch flip-flop shows up only through its clk-to-q
/// delay in the DP delay. Fanout sums over every cell output on the path.
pub fn extract_features(graph: &TimingGraph, path: &TimingPath) -> Result<FeatureVector, String> {
    let mut f = [0.0; NUM_FEATURES];
    let parts = [(Part::Lp, &path.lp), (Part::Dp, &path.dp), (Part::Cp, &path.cp)];
    let mut delays = [0.0; 3];
    for (part, arcs) in parts {
        let p = part as usize;
        for &a in arcs.iter() {
            let arc = graph.arcs.get(a as usize).ok_or_else(|| format!("path {} references unknown arc {a}", path.id))?;
            delays[p] += arc.delay;
            match arc.kind {
                ArcKind::Wire(net) => {
                    if graph.conn.route[net].is_none() {
                        return Err(format!("net `{}` has no route", graph.conn.nets[net]));
                    }
                    for (layer, len) in graph.wire_segments(net) {
                        match layer {
                            Layer::M5 if matches!(part, Part::Dp) => f[DP_M5] += len,
                            Layer::M5 => return Err(format!("clock net `{}` routed on M5", graph.conn.nets[net])),
                            l => f[WIRE + 4 * p + l.index()] += len,
                        }
                    }
                }
                ArcKind::Cell(inst) => {
                    let out = graph.conn.index[graph.inst_output(inst)];
                    f[FANOUT] += graph.conn.fanout(out) as f64;
                    if matches!(inst, Inst::FlipFlop(_)) {
                        continue;
                    }
                    f[CELLS + p] += 1.0;
                    match graph.inst_cell(inst).1 {
                        Drive::X16 if matches!(part, Part::Dp) => f[DP_X16] += 1.0,
                        Drive::X16 => return Err(format!("x16 cell `{}` on a clock path", graph.inst_name(inst))),
                        d => f[DRIVES + 5 * p + d.index()] += 1.0,
                    }
                }
            }
        }
    }
    f[SETUP] = path.setup;
    f[SETUP + 1] = delays[0];
    f[SETUP + 2] = delays[1];
    f[SETUP + 3] = delays[2];
    f[SETUP + 4] = path.delay;
    Ok(f)
}

pub fn extract_all(graph: &TimingGraph, paths: &[TimingPath]) -> Result<Vec<FeatureVector>, String> {
    paths.iter().map(|p| extract_features(graph, p)).collect()
}

/// One labelled sample of the GTM training data.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub path_id: usize,
    pub features: FeatureVector,
    pub label_ps: f64,
}

pub fn dataset_header() -> String {
    let mut s = String::from("path_id");
    for n in FEATURE_NAMES {
        s.push(',');
        s.push_str(n);
    }
    s.push_str(",label_ps");
    s
}

pub fn dataset_to_csv(samples: &[Sample]) -> String {
    let mut s = dataset_header();
    s.push('\n');
    for r in samples {
        let _ = write!(s, "{}", r.path_id);
        for v in &r.features {
            let _ = write!(s, ",{v}");
        }
        let _ = writeln!(s, ",{}", r.label_ps);
    }
    s
}

pub fn dataset_from_csv(text: &str) -> Result<Vec<Sample>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(dataset_header().as_str()) {
        return Err("dataset header does not match the feature list".into());
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || format!("dataset line {}: malformed row", i + 2);
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != NUM_FEATURES + 2 {
            return Err(bad());
        }
        let mut features = [0.0; NUM_FEATURES];
        for (k, c) in cols[1..=NUM_FEATURES].iter().enumerate() {
            features[k] = c.parse().map_err(|_| bad())?;
        }
        out.push(Sample {
            path_id: cols[0].parse().map_err(|_| bad())?,
            features,
            label_ps: cols[NUM_FEATURES + 1].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}
