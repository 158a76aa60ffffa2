// SPDX-License-Identifier: Apache-2.0

//! Fabricate chips from one process snapshot and age one of them; compare a
//! path's delay across design, fresh silicon and used silicon.

use agewise::aging::{AgingConditions, AgingPhysics};
use agewise::fabsim::{age_chip, fabricate, sample_fab_model, FabConfig};
use agewise::netlist::{generate_netlist, simulate_activity, GenSpec};
use agewise::sta::TimingGraph;
use agewise::CellLibrary;

fn main() {
    let lib = CellLibrary::default();
    let nl = generate_netlist(&GenSpec::default(), &lib).unwrap();
    let g = TimingGraph::elaborate(&nl, &lib).unwrap();
    let paths = g.enumerate_paths(1);
    let fab = sample_fab_model(&FabConfig::default(), 42).unwrap();

    let chips: Vec<_> = (0..4).map(|i| fabricate(&g, &fab, &format!("chip{i}"), i).unwrap()).collect();
    let usage = simulate_activity(&nl, 10_000, 3).unwrap();
    let used = age_chip(&g, &chips[0], &usage, Some(3), &AgingConditions::months(6.0), &AgingPhysics::default())
        .unwrap();

    println!("{:>5} {:>9} {:>9} {:>9} {:>9} {:>14}", "path", "STA", "chip0", "chip1", "chip2", "chip0 6 months");
    for p in paths.iter().take(8) {
        let d: Vec<f64> = chips.iter().map(|c| g.delay_with(p, &c.arc_delays)).collect();
        println!(
            "{:>5} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>14.2}",
            p.id,
            p.delay,
            d[0],
            d[1],
            d[2],
            g.delay_with(p, &used.arc_delays)
        );
    }
    println!("chip dump is {} lines", used.emit().lines().count());
}
