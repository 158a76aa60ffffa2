// SPDX-License-Identifier: Apache-2.0

//! Characterize cell aging over duty cycle, toggle rate and months, fit the
//! per-cell regressors, and predict the aging of a generated design's paths.
//! The fit takes several seconds.

use agewise::aging::{
    build_gate_aging_db, fit_gate_age_model, predict_path_aging, AgingConditions, AgingPhysics,
};
use agewise::netlist::{generate_netlist, simulate_activity, GenSpec};
use agewise::sta::TimingGraph;
use agewise::{CellLibrary, Drive, GateType};

fn main() {
    let lib = CellLibrary::default();
    let cycles = 10_000;
    let db = build_gate_aging_db(&lib, 0, cycles, cycles, &AgingConditions::default(), &AgingPhysics::default())
        .expect("valid sweep");
    let model = fit_gate_age_model(&db).expect("model meets its quality bar");

    println!("NAND2 x1 delay shift (ps) by months, at DC 0.5:");
    for tc in [0, 2_000, 10_000] {
        let row: Vec<String> = [1.0, 3.0, 6.0, 12.0]
            .iter()
            .map(|&m| format!("{:6.3}", model.predict(GateType::Nand2, Drive::X1, 0.5, tc, m).unwrap()))
            .collect();
        println!("  tc {tc:>6}: {}", row.join(" "));
    }

    let nl = generate_netlist(&GenSpec::default(), &lib).unwrap();
    let g = TimingGraph::elaborate(&nl, &lib).unwrap();
    let paths = g.enumerate_paths(10);
    let act = simulate_activity(&nl, cycles, 7).unwrap();
    let mut aging = predict_path_aging(&g, &paths, &model, &act, 12.0).unwrap();
    aging.sort_by(f64::total_cmp);
    let q = |f: f64| aging[((aging.len() - 1) as f64 * f) as usize];
    println!(
        "12-month path aging over {} paths: min {:.2}, median {:.2}, max {:.2} ps",
        aging.len(),
        q(0.0),
        q(0.5),
        q(1.0)
    );
}
