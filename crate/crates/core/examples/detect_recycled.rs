// SPDX-License-Identifier: Apache-2.0

//! Design-time MAP/LAP selection, then per-chip detection on a fresh chip
//! and on the same chip after three months in the field.

use agewise::aging::{build_gate_aging_db, fit_gate_age_model, AgingConditions, AgingPhysics};
use agewise::cfst::{cfst_measure, CfstConfig};
use agewise::detector::{extract_all, identify_adp, run_detection, DetectorConfig, PathTable};
use agewise::fabsim::{age_chip, fabricate, sample_fab_model, FabConfig};
use agewise::netlist::{generate_netlist, simulate_activity, GenSpec};
use agewise::sta::TimingGraph;
use agewise::CellLibrary;

fn main() {
    let lib = CellLibrary::default();
    let cycles = 10_000;
    let nl = generate_netlist(&GenSpec::default(), &lib).unwrap();
    let g = TimingGraph::elaborate(&nl, &lib).unwrap();
    let paths = g.enumerate_paths(10);
    let features = extract_all(&g, &paths).unwrap();

    let db = build_gate_aging_db(&lib, 0, cycles, cycles, &AgingConditions::default(), &AgingPhysics::default())
        .unwrap();
    let model = fit_gate_age_model(&db).unwrap();
    let reference = simulate_activity(&nl, cycles, 1).unwrap();
    let cfg = DetectorConfig::default();
    let tester = CfstConfig::default();
    let adp = identify_adp(&g, &paths, &model, &reference, &tester, &cfg).unwrap();
    println!("MAP {} paths, LAP {} paths", adp.map.len(), adp.lap.len());

    let fab = sample_fab_model(&FabConfig::default(), 9).unwrap();
    let fresh = fabricate(&g, &fab, "dut", 4).unwrap();
    let usage = simulate_activity(&nl, cycles, 2).unwrap();
    let used = age_chip(&g, &fresh, &usage, Some(2), &AgingConditions::months(3.0), &AgingPhysics::default())
        .unwrap();

    let table = PathTable::new(&paths, &features);
    for (label, chip) in [("fresh", &fresh), ("3 months", &used)] {
        let meas = cfst_measure(&g, chip, &paths, &tester).unwrap();
        let r = run_detection(label, &table, &adp, &meas, &cfg).unwrap();
        println!(
            "{label:>9}: mean AD MAP {:6.2} ps, LAP {:6.2} ps, MS {:6.2} ps -> {}",
            r.mean_ad_map, r.mean_ad_lap, r.ms_ps, r.verdict
        );
    }
}
