// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::HashMap;

use agewise::library::{Drive, GateType, Layer};
use agewise::netlist::parse_netlist;
use agewise::sta::{ArcKind, Inst, StaError, TimingGraph};
use agewise::CellLibrary;
use common::{exhaustive_paths, fixture, random_dag, FIVE, INV1};

#[test]
fn inv1_path_has_one_cell_and_two_wires() {
    let (_, g) = fixture(INV1);
    let p = &g.k_longest_paths("ff1", 5).unwrap();
    assert_eq!(p.len(), 1);
    let dp = &p[0].dp;
    // clk_to_q, wire q0, INV, wire n1
    assert_eq!(dp.len(), 4);
    assert!(matches!(g.arcs[dp[0] as usize].kind, ArcKind::Cell(Inst::FlipFlop(0))));
    let cells = dp[1..].iter().filter(|&&a| matches!(g.arcs[a as usize].kind, ArcKind::Cell(_))).count();
    let wires = dp.iter().filter(|&&a| matches!(g.arcs[a as usize].kind, ArcKind::Wire(_))).count();
    assert_eq!((cells, wires), (1, 2));
}

#[test]
fn cell_arcs_take_library_delays() {
    let (nl, g) = fixture(FIVE);
    let lib = CellLibrary::default();
    let g1 = nl.gates.iter().position(|x| x.id == "g1").unwrap();
    for &a in &g.gate_arcs[g1] {
        assert_eq!(g.arcs[a as usize].delay, lib.delay(GateType::Nand2, Drive::X1));
    }
}

#[test]
fn wire_delay_is_unit_times_length() {
    let mut lib = CellLibrary::default();
    lib.wire_unit[Layer::M2.index()] = 0.8;
    let text = INV1.replace("route q0 M1:10", "route q0 M2:10");
    let g = TimingGraph::elaborate(&parse_netlist(&text).unwrap(), &lib).unwrap();
    let q0 = g.conn.index["q0"];
    assert_eq!(g.arcs[g.wire_arc[q0] as usize].delay, 8.0);
}

const DIAMOND: &str = "\
period 600
clkbuf cb drive=x4
ff src d=dsrc q=s clkpath=cb
ff dst d=j q=dq clkpath=cb
gate a BUF x1 in=s out=ba
gate b INV x1 in=s out=bb
gate join AND2 x1 in=ba,bb out=j
gate back BUF x1 in=dq out=dsrc
route cb M2:10
route s M1:1
route ba M1:1
route bb M1:1
route j M1:1
route dq M1:1
route dsrc M1:1
";

#[test]
fn diamond_branches_come_out_longest_first() {
    let mut lib = CellLibrary::default();
    lib.base_delay[GateType::Buf.index()][Drive::X1.index()] = 10.0;
    lib.base_delay[GateType::Inv.index()][Drive::X1.index()] = 7.0;
    let g = TimingGraph::elaborate(&parse_netlist(DIAMOND).unwrap(), &lib).unwrap();
    let p = g.k_longest_paths("dst", 2).unwrap();
    assert_eq!(p.len(), 2);
    assert!((p[0].delay - p[1].delay - 3.0).abs() < 1e-9);
    let a = g.netlist.gates.iter().position(|x| x.id == "a").unwrap();
    assert!(p[0].dp.contains(&g.gate_arcs[a][0]));
    // asking for more than exist returns each path once
    assert_eq!(g.k_longest_paths("dst", 10).unwrap().len(), 2);
    assert!(matches!(g.k_longest_paths("nope", 1), Err(StaError::UnknownEndpoint(_))));
}

/// Longest arrival by a plain topological dynamic program.
fn longest_by_dp(g: &TimingGraph, endpoint: usize) -> Option<f64> {
    let n = g.conn.nets.len();
    let mut arr = vec![f64::NEG_INFINITY; n];
    let delay = |a: u32| g.arcs[a as usize].delay;
    for (f, ff) in g.netlist.flip_flops.iter().enumerate() {
        let lp: f64 = g.clock_arcs[f].iter().map(|&a| delay(a)).sum();
        let q = g.conn.index[&ff.q];
        arr[q] = lp + delay(g.clk_to_q_arc[f]) + delay(g.wire_arc[q]);
    }
    // gates are relaxed until nothing changes; the graph is acyclic
    loop {
        let mut changed = false;
        for (gi, gate) in g.netlist.gates.iter().enumerate() {
            let o = g.conn.index[&gate.output];
            for (pin, i) in gate.inputs.iter().enumerate() {
                let v = arr[g.conn.index[i]] + delay(g.gate_arcs[gi][pin]) + delay(g.wire_arc[o]);
                if v > arr[o] {
                    arr[o] = v;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let d = arr[g.conn.index[&g.netlist.flip_flops[endpoint].d]];
    let cp: f64 = g.clock_arcs[endpoint].iter().map(|&a| delay(a)).sum();
    (d > f64::NEG_INFINITY).then(|| d + g.lib.setup - cp)
}

#[test]
fn k_longest_matches_exhaustive_enumeration() {
    let lib = CellLibrary::default();
    let mut checked = 0;
    for seed in 0..200 {
        let nl = random_dag(seed, 12);
        let g = TimingGraph::elaborate(&nl, &lib).unwrap();
        for e in 0..nl.flip_flops.len() {
            let all = exhaustive_paths(&g, e);
            for k in [1, 3, all.len() + 2] {
                let got = g.k_longest_paths(&nl.flip_flops[e].id, k).unwrap();
                let want: Vec<_> = all.iter().take(k).collect();
                assert_eq!(got.len(), want.len(), "seed {seed} ep {e} k {k}");
                for (a, b) in got.iter().zip(want) {
                    assert_eq!((a.launch, &a.dp, a.delay), (b.launch, &b.dp, b.delay), "seed {seed}");
                }
            }
            let best = g.k_longest_paths(&nl.flip_flops[e].id, 1).unwrap();
            match longest_by_dp(&g, e) {
                Some(d) => assert!((best[0].delay - d).abs() < 1e-9),
                None => assert!(best.is_empty()),
            }
            checked += 1;
        }
    }
    assert!(checked >= 200);
}

#[test]
fn delay_and_slack_are_consistent() {
    let (nl, g) = fixture(FIVE);
    for p in g.enumerate_paths(10) {
        assert_eq!(p.slack + p.delay, nl.period);
        assert_eq!(g.delay_with(&p, &g.delays()), p.delay);
        assert_eq!(g.path_delay(&p, &HashMap::new()).unwrap(), p.delay);
    }
}

fn path_from<'a>(paths: &'a [agewise::sta::TimingPath], g: &TimingGraph, launch: &str, capture: &str, via: &str) -> &'a agewise::sta::TimingPath {
    let gi = g.netlist.gates.iter().position(|x| x.id == via).unwrap();
    paths
        .iter()
        .find(|p| {
            g.netlist.flip_flops[p.launch].id == launch
                && g.netlist.flip_flops[p.endpoint].id == capture
                && p.dp.iter().any(|a| g.gate_arcs[gi].contains(a))
        })
        .expect("fixture path")
}

#[test]
fn overrides_add_and_shared_clock_cancels() {
    let (_, g) = fixture(FIVE);
    let paths = g.enumerate_paths(10);
    let p = path_from(&paths, &g, "fa", "fb", "g3");
    let g3 = g.netlist.gates.iter().position(|x| x.id == "g3").unwrap();
    let arc = *p.dp.iter().find(|a| g.gate_arcs[g3].contains(a)).unwrap();
    let bump = HashMap::from([(arc, g.arcs[arc as usize].delay + 5.0)]);
    assert!((g.path_delay(p, &bump).unwrap() - p.delay - 5.0).abs() < 1e-9);
    // cbr sits on both the launch and capture clock paths
    let root = g.clock_buffer_arc[0];
    let shared = HashMap::from([(root, g.arcs[root as usize].delay + 3.0)]);
    assert!((g.path_delay(p, &shared).unwrap() - p.delay).abs() < 1e-9);
    assert!(matches!(g.path_delay(p, &HashMap::from([(99_999, 1.0)])), Err(StaError::UnknownArc(_))));
}

#[test]
fn retime_sums_data_cells_and_subtracts_capture_clock() {
    let (_, g) = fixture(FIVE);
    let paths = g.enumerate_paths(10);
    let p = path_from(&paths, &g, "fa", "fc", "g4").clone();
    let zero = g.retime_increments(std::slice::from_ref(&p), &HashMap::new()).unwrap();
    assert_eq!(zero, vec![0.0]);
    let four: HashMap<String, f64> = ["fa", "g1", "g2", "g4"].iter().map(|n| (n.to_string(), 2.0)).collect();
    let d = g.retime_increments(std::slice::from_ref(&p), &four).unwrap();
    assert!((d[0] - 8.0).abs() < 1e-12);
    // cb2 clocks only the capture flip-flop fc
    let cp_only = HashMap::from([("cb2".to_string(), 6.0)]);
    let d = g.retime_increments(std::slice::from_ref(&p), &cp_only).unwrap();
    assert!((d[0] + 6.0).abs() < 1e-12);
    let bad = HashMap::from([("zz".to_string(), 1.0)]);
    assert!(matches!(g.retime_increments(&[p.clone()], &bad), Err(StaError::UnknownInstance(_))));
    let neg = HashMap::from([("g1".to_string(), -1.0)]);
    assert!(matches!(g.retime_increments(&[p], &neg), Err(StaError::NegativeIncrement(_))));
}

#[test]
fn path_dump_round_trips() {
    let (_, g) = fixture(FIVE);
    let paths = g.enumerate_paths(10);
    let text = g.emit_paths(&paths);
    assert_eq!(g.parse_paths(&text).unwrap(), paths);
    let tampered = text.replacen(" d=", " d=1", 1);
    assert!(g.parse_paths(&tampered).is_err());
}
