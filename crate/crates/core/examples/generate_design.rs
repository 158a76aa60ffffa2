// SPDX-License-Identifier: Apache-2.0

//! Generate a synthetic design, time it, and print its netlist header.
//!
//!     cargo run --example generate_design -- [seed]

use agewise::netlist::{generate_netlist, GenSpec};
use agewise::sta::TimingGraph;
use agewise::CellLibrary;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let lib = CellLibrary::default();
    let spec = GenSpec { seed, ..GenSpec::default() };
    let nl = generate_netlist(&spec, &lib).expect("valid generator spec");
    let g = TimingGraph::elaborate(&nl, &lib).expect("generated netlists are well formed");
    let paths = g.enumerate_paths(10);

    println!("{} gates, {} flip-flops, {} clock buffers", nl.gates.len(), nl.flip_flops.len(), nl.clock_buffers.len());
    println!("period {:.1} ps, critical path {:.1} ps", nl.period, g.critical_delay());
    println!("{} paths (10 per endpoint)", paths.len());
    let text = nl.emit();
    for line in text.lines().filter(|l| !l.starts_with("output")).take(12) {
        println!("  {line}");
    }
    println!("  ... {} lines in total", text.lines().count());
}
