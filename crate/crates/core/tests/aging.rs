// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use agewise::aging::*;
use agewise::library::{Drive, GateType};
use agewise::netlist::{ActivityProfile, NetActivity};
use agewise::CellLibrary;
use common::{fixture, FIVE, INV1};

const CYCLES: u64 = 10_000;

fn db() -> &'static GateAgingDb {
    static DB: OnceLock<GateAgingDb> = OnceLock::new();
    DB.get_or_init(|| {
        build_gate_aging_db(&CellLibrary::default(), 0, CYCLES, CYCLES, &AgingConditions::default(), &AgingPhysics::default())
            .unwrap()
    })
}

fn model() -> &'static GateAgeModel {
    static M: OnceLock<GateAgeModel> = OnceLock::new();
    M.get_or_init(|| fit_gate_age_model(db()).unwrap())
}

#[test]
fn threshold_shift_examples() {
    assert_eq!(oracle_delta_vth(0.3, 0.4, &AgingConditions::months(0.0)).unwrap(), 0.0);
    for m in [1.0, 6.0, 12.0] {
        assert_eq!(oracle_delta_vth(1.0, 0.0, &AgingConditions::months(m)).unwrap(), 0.0);
    }
    let v = oracle_delta_vth(0.5, 0.1, &AgingConditions::months(12.0)).unwrap();
    let hand = 0.030 * 0.5f64.sqrt() + 0.020 * 0.1f64.sqrt();
    assert!((v - hand).abs() < 1e-15);
    assert!((v - 0.0275).abs() < 1e-4);
    assert!(oracle_delta_vth(1.2, 0.0, &AgingConditions::default()).is_err());
    assert!(oracle_delta_vth(0.5, 1.5, &AgingConditions::default()).is_err());
    assert!(oracle_delta_vth(0.5, 0.5, &AgingConditions::months(-1.0)).is_err());
}

#[test]
fn delay_shift_examples() {
    let mut lib = CellLibrary::default();
    lib.base_delay[GateType::Nand2.index()][Drive::X1.index()] = 20.0;
    let phys = AgingPhysics::default();
    let cond = AgingConditions::default();
    // 27.5 mV over 0.55 V of headroom is a 5% slowdown
    assert!((20.0 * phys.sensitivity(0.0275, &cond, &lib).unwrap() - 1.0).abs() < 1e-12);
    let d = oracle_delta_delay(GateType::Nand2, Drive::X1, 0.5, 1000, CYCLES, &cond, &lib).unwrap();
    let dv = oracle_delta_vth(0.5, 0.1, &cond).unwrap();
    assert!((d - 20.0 * dv / 0.55).abs() < 1e-12);
    assert_eq!(oracle_delta_delay(GateType::Nand2, Drive::X1, 0.5, 1000, CYCLES, &AgingConditions::months(0.0), &lib).unwrap(), 0.0);
    let x1 = oracle_delta_delay(GateType::Or2, Drive::X1, 0.4, 3000, CYCLES, &cond, &lib).unwrap();
    let x8 = oracle_delta_delay(GateType::Or2, Drive::X8, 0.4, 3000, CYCLES, &cond, &lib).unwrap();
    let ratio = lib.delay(GateType::Or2, Drive::X8) / lib.delay(GateType::Or2, Drive::X1);
    assert!((x8 / x1 - ratio).abs() < 1e-12);
}

#[test]
fn shift_is_monotone_and_saturating() {
    let p = AgingPhysics::default();
    let at = |dc: f64, r: f64, m: f64| p.delta_vth(dc, r, &AgingConditions::months(m)).unwrap();
    for m in 1..12 {
        let m = m as f64;
        assert!(at(0.3, 0.2, m + 1.0) >= at(0.3, 0.2, m));
        assert!(at(0.2, 0.2, m) >= at(0.3, 0.2, m));
        assert!(at(0.3, 0.3, m) >= at(0.3, 0.2, m));
        // the bias-temperature term alone grows less than linearly
        assert!(at(0.0, 0.0, 2.0 * m) / at(0.0, 0.0, m) < 2.0);
    }
    assert!(p.theta(125.0) == 1.0 && p.theta(85.0) < 1.0);
}

#[test]
fn database_grid() {
    let db = db();
    assert_eq!(db.cells.len(), 42);
    for recs in db.cells.values() {
        assert_eq!(recs.len(), 21 * 51 * 12);
        assert_eq!(recs.len(), 12_852);
    }
    let lib = CellLibrary::default();
    let recs = &db.cells[&(GateType::Xor2, Drive::X2)];
    for r in recs.iter().step_by(97) {
        let fresh = oracle_delta_delay(GateType::Xor2, Drive::X2, r.dc, r.tc, CYCLES, &AgingConditions::months(r.months as f64), &lib).unwrap();
        assert_eq!(r.delta_ps, fresh);
    }
    // non-decreasing in months at fixed stress
    for w in recs.windows(2) {
        if w[0].dc == w[1].dc && w[0].tc == w[1].tc {
            assert!(w[1].delta_ps >= w[0].delta_ps && w[1].months == w[0].months + 1);
        }
    }
    let again = build_gate_aging_db(&lib, 0, CYCLES, CYCLES, &AgingConditions::default(), &AgingPhysics::default()).unwrap();
    assert_eq!(again.to_csv(), db.to_csv());
}

#[test]
fn collapsed_toggle_axis() {
    let db = build_gate_aging_db(&CellLibrary::default(), 400, 400, CYCLES, &AgingConditions::default(), &AgingPhysics::default()).unwrap();
    for recs in db.cells.values() {
        assert_eq!(recs.len(), 21 * 12);
        let mut keys: Vec<(u64, u64, u32)> = recs.iter().map(|r| ((r.dc * 100.0) as u64, r.tc, r.months)).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), recs.len());
    }
}

#[test]
fn database_csv_round_trip() {
    let db = build_gate_aging_db(&CellLibrary::default(), 10, 20, 100, &AgingConditions::default(), &AgingPhysics::default()).unwrap();
    let text = db.to_csv();
    assert!(text.starts_with("gate,drive,dc,tc,months,delta_ps\n"));
    assert_eq!(GateAgingDb::records_from_csv(&text).unwrap(), db.cells);
}

#[test]
fn model_meets_quality_bar() {
    let m = model();
    for (key, cell) in &m.cells {
        assert!(cell.holdout_r2 >= 0.99, "{key:?} r2 {}", cell.holdout_r2);
        assert!(cell.train_max_rel_err <= 0.02);
    }
    // spot-check grid points against the database
    let recs = &db().cells[&(GateType::Nand2, Drive::X1)];
    for r in recs.iter().step_by(53).filter(|r| r.delta_ps > 0.05) {
        let p = m.predict(GateType::Nand2, Drive::X1, r.dc, r.tc, r.months as f64).unwrap();
        assert!((p - r.delta_ps).abs() <= 0.05 * r.delta_ps, "{r:?} -> {p}");
    }
}

#[test]
fn model_at_age_zero_and_between_grid_points() {
    let m = model();
    let lib = CellLibrary::default();
    let cond = |mo: f64| AgingConditions::months(mo);
    for (dc, tc) in [(0.5, 5000u64), (0.1, 200), (0.9, 9800)] {
        let p0 = m.predict(GateType::And2, Drive::X2, dc, tc, 0.0).unwrap();
        let first = oracle_delta_delay(GateType::And2, Drive::X2, dc, tc, CYCLES, &cond(1.0), &lib).unwrap();
        assert!(p0 >= 0.0 && p0 <= first);
    }
    let lo = oracle_delta_delay(GateType::Nor2, Drive::X4, 0.50, 4000, CYCLES, &cond(6.0), &lib).unwrap();
    let hi = oracle_delta_delay(GateType::Nor2, Drive::X4, 0.55, 4000, CYCLES, &cond(6.0), &lib).unwrap();
    let mid = m.predict(GateType::Nor2, Drive::X4, 0.525, 4000, 6.0).unwrap();
    let (a, b) = (lo.min(hi), lo.max(hi));
    assert!(mid >= a * 0.95 && mid <= b * 1.05, "{mid} not within [{a}, {b}]");
}

#[test]
fn model_serializes_as_json() {
    let m = model();
    let text = serde_json::to_string(m).unwrap();
    let back: GateAgeModel = serde_json::from_str(&text).unwrap();
    assert_eq!(&back, m);
}

fn flat_activity(nets: &[&str], dc: f64, tc: u64) -> ActivityProfile {
    let mut p = ActivityProfile { cycles: CYCLES, nets: BTreeMap::new() };
    for n in nets {
        p.nets.insert(n.to_string(), NetActivity { dc, tc });
    }
    p
}

#[test]
fn path_aging_composes_instance_predictions() {
    let m = model();
    let (nl, g) = fixture(INV1);
    let mut act = flat_activity(&["cb0", "q0", "n1", "q1"], 0.5, 5000);
    let paths = g.k_longest_paths("ff1", 1).unwrap();
    assert_eq!(predict_path_aging(&g, &paths, m, &act, 0.0).unwrap(), vec![0.0]);
    // the launch flip-flop sees no stress, so the inverter is the whole story
    act.nets.insert("q0".into(), NetActivity { dc: 1.0, tc: 0 });
    let d = predict_path_aging(&g, &paths, m, &act, 12.0).unwrap()[0];
    let inv = m.predict(GateType::Inv, Drive::X1, 0.5, 5000, 12.0).unwrap();
    assert!((d - inv).abs() < 1e-3, "{d} vs {inv}");
    let inc = predict_instance_aging(&g, m, &act, 12.0).unwrap();
    assert!((d - inc["g0"] - inc["ff0"]).abs() < 1e-12);
    assert_eq!(nl.gates.len(), 1);

    // four cells along fa -> fb, whose clock paths are identical
    let (_, g) = fixture(FIVE);
    let names = ["en", "cbr", "cb1", "cb2", "qa", "qb", "qc", "n1", "n2", "n3", "n4", "n5"];
    let act = flat_activity(&names, 0.4, 3000);
    let inc = predict_instance_aging(&g, m, &act, 9.0).unwrap();
    let all = g.enumerate_paths(10);
    let g3 = g.netlist.gates.iter().position(|x| x.id == "g3").unwrap();
    let p: Vec<_> = all
        .into_iter()
        .filter(|p| {
            g.netlist.flip_flops[p.launch].id == "fa"
                && g.netlist.flip_flops[p.endpoint].id == "fb"
                && p.dp.iter().any(|a| g.gate_arcs[g3].contains(a))
        })
        .collect();
    let d = predict_path_aging(&g, &p, m, &act, 9.0).unwrap();
    let hand: f64 = ["fa", "g1", "g2", "g3"].iter().map(|n| inc[*n]).sum();
    assert!((d[0] - hand).abs() < 1e-9);

    let missing = flat_activity(&["cb0"], 0.5, 10);
    let (_, g) = fixture(INV1);
    assert!(matches!(
        predict_path_aging(&g, &g.k_longest_paths("ff1", 1).unwrap(), m, &missing, 3.0),
        Err(AgingError::MissingActivity(_))
    ));
}

#[test]
fn toggle_counts_rescale_between_windows() {
    assert_eq!(rescale_tc(500, 1000, 10_000), 5000);
    assert_eq!(rescale_tc(7, 10, 10), 7);
}
