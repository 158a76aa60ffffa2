// SPDX-License-Identifier: Apache-2.0

//! Static timing on a hand-written netlist: the longest paths into one
//! flip-flop, their slack, and how aging a launch-side or capture-side
//! clock buffer moves them.

use std::collections::HashMap;

use agewise::netlist::parse_netlist;
use agewise::sta::TimingGraph;
use agewise::CellLibrary;

const NETLIST: &str = "\
period 800
input en
clkbuf cbr drive=x8
clkbuf cb1 drive=x4
clkbuf cb2 drive=x2
ff fa d=n5 q=qa clkpath=cbr,cb1
ff fb d=n3 q=qb clkpath=cbr,cb1
ff fc d=n4 q=qc clkpath=cbr,cb2
gate g1 NAND2 x1 in=qa,qb out=n1
gate g2 INV x1 in=n1 out=n2
gate g3 XOR2 x2 in=n2,en out=n3
gate g4 NOR2 x1 in=n2,qc out=n4
gate g5 AND2 x1 in=n3,n4 out=n5
route en M3:20
route cbr M4:60
route cb1 M3:30
route cb2 M2:25,M3:10
route qa M1:5
route qb M2:10
route qc M1:7.5
route n1 M1:4
route n2 M2:12,M5:40
route n3 M1:6
route n4 M4:30
route n5 M2:9
";

fn main() {
    let nl = parse_netlist(NETLIST).expect("netlist parses");
    let g = TimingGraph::elaborate(&nl, &CellLibrary::default()).expect("netlist elaborates");
    let paths = g.k_longest_paths("fc", 3).expect("fc is a flip-flop");
    for p in &paths {
        println!(
            "{} -> fc: delay {:.2} ps, slack {:.2} ps",
            nl.flip_flops[p.launch].id, p.delay, p.slack
        );
    }

    // cb1 only clocks launches into fc, cb2 only its capture
    for buf in ["cb1", "cb2"] {
        let inc = HashMap::from([(buf.to_string(), 5.0)]);
        let shift = g.retime_increments(&paths, &inc).expect("known instance");
        println!("{buf} +5 ps: path shifts {shift:?}");
    }
    print!("{}", g.emit_paths(&paths));
}
