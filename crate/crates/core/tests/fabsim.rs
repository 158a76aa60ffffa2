// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeMap;

use agewise::aging::{oracle_delta_delay, AgingConditions, AgingPhysics};
use agewise::fabsim::*;
use agewise::library::{Drive, GateType, Layer};
use agewise::netlist::{simulate_activity, ActivityProfile, NetActivity};
use agewise::sta::{ArcKind, Inst};
use agewise::CellLibrary;
use common::{fixture, FIVE, INV1};

fn drift_only() -> FabConfig {
    FabConfig { sigma_r: 0.0, sigma_s: 0.0, ..FabConfig::default() }
}

#[test]
fn identity_model_reproduces_sta() {
    let (_, g) = fixture(FIVE);
    let fab = sample_fab_model(&FabConfig::ideal(), 1).unwrap();
    assert!(fab.drift_gate.iter().flatten().all(|&v| v == 1.0));
    let chip = fabricate(&g, &fab, "c0", 7).unwrap();
    assert_eq!(chip.arc_delays, g.delays());
}

#[test]
fn drift_is_seeded_and_in_range() {
    let a = sample_fab_model(&FabConfig::default(), 42).unwrap();
    assert_eq!(a, sample_fab_model(&FabConfig::default(), 42).unwrap());
    for seed in 0..1000 {
        let f = sample_fab_model(&FabConfig::default(), seed).unwrap();
        let v = f.drift_gate[GateType::Nand2.index()][Drive::X1.index()];
        assert!((0.90..=1.00).contains(&v));
        assert!(f.drift_layer.iter().all(|v| (0.90..=1.05).contains(v)));
    }
    assert!(sample_fab_model(&FabConfig { sigma_r: -0.1, ..FabConfig::default() }, 1).is_err());
}

#[test]
fn without_variation_chips_match_and_differ_only_by_drift() {
    let (_, g) = fixture(FIVE);
    let fab = sample_fab_model(&drift_only(), 3).unwrap();
    let a = fabricate(&g, &fab, "a", 1).unwrap();
    let b = fabricate(&g, &fab, "b", 2).unwrap();
    assert_eq!(a.arc_delays, b.arc_delays);
    for (arc, d) in g.arcs.iter().zip(&a.arc_delays) {
        let ratio = d / arc.delay;
        match arc.kind {
            ArcKind::Cell(inst) => {
                let (t, dr) = g.inst_cell(inst);
                assert!((ratio - fab.drift_gate[t.index()][dr.index()]).abs() < 1e-12);
            }
            ArcKind::Wire(net) => {
                let segs: Vec<(Layer, f64)> = g.wire_segments(net).collect();
                if segs.len() == 1 {
                    assert!((ratio - layer_factor(&fab, segs[0].0)).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn random_variation_has_the_configured_spread() {
    let (nl, g) = fixture(FIVE);
    let cfg = FabConfig { sigma_s: 0.0, drift_gate: [1.0, 1.0], drift_layer: [1.0, 1.0], ..FabConfig::default() };
    let fab = sample_fab_model(&cfg, 9).unwrap();
    let g1 = nl.gates.iter().position(|x| x.id == "g1").unwrap();
    let arc = g.gate_arcs[g1][0] as usize;
    let nominal = g.arcs[arc].delay;
    let v: Vec<f64> = (0..500).map(|s| fabricate(&g, &fab, "c", s).unwrap().arc_delays[arc]).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
    assert!((sd / (0.03 * nominal) - 1.0).abs() <= 0.2, "sd {sd}");
    // truncation at three sigma
    assert!(v.iter().all(|x| (x / nominal - 1.0).abs() <= 0.09 + 1e-12));
}

#[test]
fn chips_are_seeded() {
    let (_, g) = fixture(FIVE);
    let fab = sample_fab_model(&FabConfig::default(), 5).unwrap();
    assert_eq!(fabricate(&g, &fab, "x", 11).unwrap(), fabricate(&g, &fab, "x", 11).unwrap());
    assert_ne!(fabricate(&g, &fab, "x", 11).unwrap().arc_delays, fabricate(&g, &fab, "x", 12).unwrap().arc_delays);
}

#[test]
fn aging_follows_the_oracle() {
    let (nl, g) = fixture(INV1);
    let fab = sample_fab_model(&FabConfig::default(), 2).unwrap();
    let chip = fabricate(&g, &fab, "c", 4).unwrap();
    let mut act = ActivityProfile { cycles: 10_000, nets: BTreeMap::new() };
    for (n, dc, tc) in [("cb0", 0.5, 10_000), ("q0", 0.5, 5000), ("n1", 0.3, 2500), ("q1", 0.5, 5000)] {
        act.nets.insert(n.into(), NetActivity { dc, tc });
    }
    let phys = AgingPhysics::default();
    let same = age_chip(&g, &chip, &act, None, &AgingConditions::months(0.0), &phys).unwrap();
    assert_eq!(same.arc_delays, chip.arc_delays);

    let aged = age_chip(&g, &chip, &act, Some(3), &AgingConditions::months(6.0), &phys).unwrap();
    assert_eq!(aged.age_months, 6.0);
    let lib = CellLibrary::default();
    let arc = g.gate_arcs[0][0] as usize;
    // the oracle shift scaled from library delay to this chip's fabricated delay
    let lib_shift = oracle_delta_delay(GateType::Inv, Drive::X1, 0.3, 2500, 10_000, &AgingConditions::months(6.0), &lib).unwrap();
    let want = chip.arc_delays[arc] * lib_shift / lib.delay(GateType::Inv, Drive::X1);
    assert!((aged.arc_delays[arc] - chip.arc_delays[arc] - want).abs() < 1e-9);
    for (i, a) in g.arcs.iter().enumerate() {
        match a.kind {
            ArcKind::Wire(_) => assert_eq!(aged.arc_delays[i], chip.arc_delays[i]),
            ArcKind::Cell(_) => assert!(aged.arc_delays[i] >= chip.arc_delays[i]),
        }
    }
    assert!(matches!(age_chip(&g, &aged, &act, None, &AgingConditions::months(1.0), &phys), Err(FabError::AlreadyAged(_))));
    let empty = ActivityProfile { cycles: 10, nets: BTreeMap::new() };
    assert!(age_chip(&g, &chip, &empty, None, &AgingConditions::months(1.0), &phys).is_err());
    assert_eq!(nl.gates.len(), 1);
}

#[test]
fn aged_path_delay_is_fabricated_plus_cell_shifts() {
    let (nl, g) = fixture(FIVE);
    let fab = sample_fab_model(&FabConfig::default(), 8).unwrap();
    let chip = fabricate(&g, &fab, "c", 1).unwrap();
    let act = simulate_activity(&nl, 4096, 2).unwrap();
    let aged = age_chip(&g, &chip, &act, Some(2), &AgingConditions::months(12.0), &AgingPhysics::default()).unwrap();
    let inc: Vec<f64> = aged.arc_delays.iter().zip(&chip.arc_delays).map(|(a, b)| a - b).collect();
    for p in g.enumerate_paths(10) {
        let before = g.delay_with(&p, &chip.arc_delays);
        let after = g.delay_with(&p, &aged.arc_delays);
        let shift = agewise::sta::retime_with(&p, &inc);
        assert!((after - before - shift).abs() < 1e-9);
        // this fixture's launch and capture clocks share a root, but the
        // capture leaf can age more, so only the data part is sign-checked
        let dp: f64 = p.dp.iter().map(|&a| inc[a as usize]).sum();
        assert!(dp >= 0.0);
    }
    let ff_arc = g.clk_to_q_arc[0] as usize;
    assert!(matches!(g.arcs[ff_arc].kind, ArcKind::Cell(Inst::FlipFlop(0))));
    assert!(aged.arc_delays[ff_arc] > chip.arc_delays[ff_arc]);
}

#[test]
fn chip_dump_round_trips() {
    let (nl, g) = fixture(FIVE);
    let fab = sample_fab_model(&FabConfig::default(), 8).unwrap();
    let chip = fabricate(&g, &fab, "chip-7", 7).unwrap();
    assert_eq!(ChipInstance::parse(&chip.emit()).unwrap(), chip);
    let act = simulate_activity(&nl, 1000, 2).unwrap();
    let aged = age_chip(&g, &chip, &act, Some(2), &AgingConditions::months(3.0), &AgingPhysics::default()).unwrap();
    assert_eq!(ChipInstance::parse(&aged.emit()).unwrap(), aged);
    assert!(ChipInstance::parse("arc 0 1.0\n").is_err());
    assert!(ChipInstance::parse("chip a\narc 1 2.0\n").is_err());
    assert!(ChipInstance::parse("chip a\narc 0 -2.0\n").is_err());
}
