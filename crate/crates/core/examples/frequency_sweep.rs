// SPDX-License-Identifier: Apache-2.0

//! Measure a fabricated chip with the clock-frequency sweep tester.

use agewise::cfst::{cfst_measure, quantize, CfstConfig};
use agewise::fabsim::{fabricate, sample_fab_model, FabConfig};
use agewise::netlist::{generate_netlist, GenSpec};
use agewise::sta::TimingGraph;
use agewise::CellLibrary;

fn main() {
    let lib = CellLibrary::default();
    let nl = generate_netlist(&GenSpec::default(), &lib).unwrap();
    let g = TimingGraph::elaborate(&nl, &lib).unwrap();
    let paths = g.enumerate_paths(10);
    let chip = fabricate(&g, &sample_fab_model(&FabConfig::default(), 1).unwrap(), "c", 1).unwrap();
    let cfg = CfstConfig::default();

    let m = cfst_measure(&g, &chip, &paths, &cfg).unwrap();
    println!(
        "{} paths measured, {} faster than the {} ps tester floor",
        m.measured.len(),
        m.unmeasurable.len(),
        cfg.min_period_ps()
    );
    for p in paths.iter().filter(|p| m.measured.contains_key(&p.id)).take(6) {
        let d = g.delay_with(p, &chip.arc_delays);
        println!("path {:>4}: silicon {d:8.2} ps, measured {:6.0} ps", p.id, m.measured[&p.id]);
        assert_eq!(quantize(d, cfg.step_ps), m.measured[&p.id]);
    }
}
