// SPDX-License-Identifier: Apache-2.0

//! Helpers shared by the integration tests.

#![allow(dead_code)]

use std::sync::OnceLock;

use agewise::aging::{build_gate_aging_db, fit_gate_age_model, AgingConditions, AgingPhysics, GateAgeModel};
use agewise::library::{Drive, GateType, Layer};
use agewise::netlist::{parse_netlist, ClockBuffer, FlipFlop, Gate, Netlist, Route, Segment};
use agewise::sta::{TimingGraph, TimingPath};
use agewise::CellLibrary;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INV1: &str = include_str!("../fixtures/inv1.nlf");
pub const FIVE: &str = include_str!("../fixtures/five.nlf");
pub const TIED: &str = include_str!("../fixtures/tied.nlf");

pub fn fixture(text: &str) -> (Netlist, TimingGraph) {
    let nl = parse_netlist(text).expect("fixture parses");
    let g = TimingGraph::elaborate(&nl, &CellLibrary::default()).expect("fixture elaborates");
    (nl, g)
}

/// A random design whose combinational part has at most `max_nodes` nodes
/// (flip-flop outputs plus gates).
pub fn random_dag(seed: u64, max_nodes: usize) -> Netlist {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_ff = rng.random_range(1..=3);
    let n_gates = rng.random_range(1..=max_nodes - n_ff);
    let mut nl = Netlist { period: 1000.0, ..Default::default() };
    nl.clock_buffers.push(ClockBuffer { id: "root".into(), drive: Drive::X8 });
    nl.clock_buffers.push(ClockBuffer { id: "leaf0".into(), drive: Drive::X4 });
    nl.clock_buffers.push(ClockBuffer { id: "leaf1".into(), drive: Drive::X2 });
    let mut sources: Vec<String> = (0..n_ff).map(|i| format!("q{i}")).collect();
    for k in 0..n_gates {
        let t = GateType::ALL[rng.random_range(0..7)];
        let mut inputs = vec![sources[rng.random_range(0..sources.len())].clone()];
        if t.arity() == 2 {
            inputs.push(sources[rng.random_range(0..sources.len())].clone());
        }
        let drive = Drive::ALL[rng.random_range(0..6)];
        nl.gates.push(Gate { id: format!("g{k}"), gate_type: t, drive, inputs, output: format!("n{k}") });
        sources.push(format!("n{k}"));
    }
    for i in 0..n_ff {
        // capture from a gate when possible so that paths exist
        let d = format!("n{}", rng.random_range(0..n_gates));
        let leaf = if rng.random_bool(0.5) { "leaf0" } else { "leaf1" };
        nl.flip_flops.push(FlipFlop {
            id: format!("f{i}"),
            d,
            q: format!("q{i}"),
            clkpath: vec!["root".into(), leaf.into()],
        });
    }
    let mut nets: Vec<String> = vec!["root".into(), "leaf0".into(), "leaf1".into()];
    nets.extend(sources);
    for net in nets {
        let clock = matches!(net.as_str(), "root" | "leaf0" | "leaf1");
        let layers = if clock { 4 } else { 5 };
        let segs = (0..rng.random_range(1..=2))
            .map(|_| Segment {
                layer: Layer::ALL[rng.random_range(0..layers)],
                length_um: (rng.random_range(1.0..80.0f64) * 100.0).round() / 100.0,
            })
            .collect();
        nl.routes.push(Route { net, segments: segs });
    }
    nl
}

/// Every path into `endpoint`, by depth-first search over the netlist,
/// sorted longest first with the same tie-break as the STA engine.
pub fn exhaustive_paths(g: &TimingGraph, endpoint: usize) -> Vec<TimingPath> {
    fn back(g: &TimingGraph, net: usize, suffix: &mut Vec<u32>, out: &mut Vec<(usize, Vec<u32>)>) {
        suffix.push(g.wire_arc[net]);
        let name = &g.conn.nets[net];
        if let Some(f) = g.netlist.flip_flops.iter().position(|f| &f.q == name) {
            suffix.push(g.clk_to_q_arc[f]);
            out.push((f, suffix.iter().rev().copied().collect()));
            suffix.pop();
        } else if let Some(gi) = g.netlist.gates.iter().position(|x| &x.output == name) {
            for (pin, input) in g.netlist.gates[gi].inputs.iter().enumerate() {
                suffix.push(g.gate_arcs[gi][pin]);
                back(g, g.conn.index[input], suffix, out);
                suffix.pop();
            }
        }
        suffix.pop();
    }
    let mut found = Vec::new();
    let d = g.conn.index[&g.netlist.flip_flops[endpoint].d];
    back(g, d, &mut Vec::new(), &mut found);
    let delays = g.delays();
    let mut paths: Vec<TimingPath> = found
        .into_iter()
        .map(|(launch, dp)| {
            let mut p = TimingPath {
                id: 0,
                endpoint,
                launch,
                lp: g.clock_arcs[launch].clone(),
                dp,
                cp: g.clock_arcs[endpoint].clone(),
                setup: g.lib.setup,
                delay: 0.0,
                slack: 0.0,
            };
            p.delay = g.delay_with(&p, &delays);
            p.slack = g.netlist.period - p.delay;
            p
        })
        .collect();
    paths.sort_by(|a, b| b.delay.total_cmp(&a.delay).then_with(|| a.dp.cmp(&b.dp)).then_with(|| a.lp.cmp(&b.lp)));
    paths
}

pub const CYCLES: u64 = 10_000;

/// The gate aging model over the full toggle range, fitted once per test binary.
pub fn gate_model() -> &'static GateAgeModel {
    static M: OnceLock<GateAgeModel> = OnceLock::new();
    M.get_or_init(|| {
        let db = build_gate_aging_db(
            &CellLibrary::default(),
            0,
            CYCLES,
            CYCLES,
            &AgingConditions::default(),
            &AgingPhysics::default(),
        )
        .unwrap();
        fit_gate_age_model(&db).unwrap()
    })
}
