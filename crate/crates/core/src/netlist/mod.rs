// SPDX-License-Identifier: Apache-2.0

//! Annotated gate-level sequential netlists.
//!
//! A netlist is plain data; [`Connectivity`] derives driver/sink tables from
//! it and [`Netlist::validate`] enforces the structural rules (single driver,
//! acyclic logic, routed nets, data-only M5 and x16).

mod generate;
mod parse;
mod sim;

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::library::{Drive, GateType, Layer};

pub use generate::{generate_netlist, GenSpec};
pub use parse::parse_netlist;
pub use sim::{parse_activity, simulate_activity, tc_bounds, ActivityProfile, NetActivity};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub layer: Layer,
    pub length_um: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub id: String,
    pub gate_type: GateType,
    pub drive: Drive,
    pub inputs: Vec<String>,
    pub output: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipFlop {
    pub id: String,
    pub d: String,
    pub q: String,
    /// Clock buffers from the root to this flip-flop's clock pin.
    pub clkpath: Vec<String>,
}

/// A clock buffer drives the net that carries its own id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockBuffer {
    pub id: String,
    pub drive: Drive,
}

/// A constant net (tie cell).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tie {
    pub net: String,
    pub value: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub net: String,
    pub segments: Vec<Segment>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Netlist {
    pub period: f64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub ties: Vec<Tie>,
    pub clock_buffers: Vec<ClockBuffer>,
    pub flip_flops: Vec<FlipFlop>,
    pub gates: Vec<Gate>,
    pub routes: Vec<Route>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Syntax(String),
    UndeclaredNet(String),
    MultipleDrivers(String),
    CombinationalCycle(String),
    MissingRoute(String),
    Invalid(String),
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ErrorKind::UndeclaredNet(n) => write!(f, "net `{n}` is used but never driven"),
            ErrorKind::MultipleDrivers(n) => write!(f, "net `{n}` has more than one driver"),
            ErrorKind::CombinationalCycle(g) => write!(f, "combinational cycle through gate `{g}`"),
            ErrorKind::MissingRoute(n) => write!(f, "net `{n}` has no route"),
            ErrorKind::Invalid(m) => f.write_str(m),
        }
    }
}

/// A netlist diagnostic. `line` and `col` are 1-based and zero when the
/// netlist did not come from text.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct NetlistError {
    pub line: usize,
    pub col: usize,
    pub kind: ErrorKind,
}

impl fmt::Display for NetlistError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "{}:{}: {}", self.line, self.col, self.kind)
        } else {
            write!(f, "{}", self.kind)
        }
    }
}

impl NetlistError {
    pub(crate) fn at(line: usize, col: usize, kind: ErrorKind) -> Self {
        NetlistError { line, col, kind }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Driver {
    Input,
    Tie(bool),
    Gate(usize),
    /// Flip-flop Q output.
    FlipFlop(usize),
    ClockBuffer(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sink {
    Gate { gate: usize, pin: usize },
    FlipFlopD(usize),
    FlipFlopClk(usize),
    ClockBuffer(usize),
    Output,
}

/// Net-indexed driver and sink tables derived from a netlist.
#[derive(Clone, Debug)]
pub struct Connectivity {
    pub nets: Vec<String>,
    pub index: HashMap<String, usize>,
    pub driver: Vec<Driver>,
    pub sinks: Vec<Vec<Sink>>,
    /// Route position in `Netlist::routes` per net.
    pub route: Vec<Option<usize>>,
    /// Per clock buffer, the buffer that drives its input (None at the root).
    pub clock_parent: Vec<Option<usize>>,
    /// Gate indices in topological order.
    pub topo: Vec<usize>,
}

impl Connectivity {
    pub fn net(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn fanout(&self, net: usize) -> usize {
        self.sinks[net].len()
    }
}

/// Source positions of statements, recorded by the parser so that semantic
/// errors can point back into the text.
#[derive(Clone, Debug, Default)]
pub(crate) struct Locations {
    pub period: Pos,
    pub inputs: Vec<Pos>,
    pub outputs: Vec<Pos>,
    pub ties: Vec<Pos>,
    pub clock_buffers: Vec<Pos>,
    /// Per flip-flop: statement, d token, q token, clkpath token.
    pub flip_flops: Vec<[Pos; 4]>,
    /// Per gate: statement, then one position per input, then the output.
    pub gates: Vec<Vec<Pos>>,
    pub routes: Vec<Pos>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub(crate) struct Pos {
    pub line: usize,
    pub col: usize,
}

fn pick<T: Copy + Default>(v: &[T], i: usize) -> T {
    v.get(i).copied().unwrap_or_default()
}

impl Netlist {
    /// Structural checks; see the module documentation.
    pub fn validate(&self) -> Result<Connectivity, NetlistError> {
        self.validate_at(&Locations::default())
    }

    pub(crate) fn validate_at(&self, loc: &Locations) -> Result<Connectivity, NetlistError> {
        let err = |p: Pos, kind| NetlistError::at(p.line, p.col, kind);
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(err(loc.period, ErrorKind::Invalid(format!("clock period must be positive, got {}", self.period))));
        }

        // instance ids share one namespace
        let mut ids: HashMap<&str, ()> = HashMap::new();
        let inst_ids = self
            .clock_buffers
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.as_str(), pick(&loc.clock_buffers, i)))
            .chain(self.flip_flops.iter().enumerate().map(|(i, f)| (f.id.as_str(), pick(&loc.flip_flops, i)[0])))
            .chain(self.gates.iter().enumerate().map(|(i, g)| (g.id.as_str(), loc.gates.get(i).map_or(Pos::default(), |v| v[0]))));
        for (id, p) in inst_ids {
            if ids.insert(id, ()).is_some() {
                return Err(err(p, ErrorKind::Invalid(format!("instance id `{id}` declared twice"))));
            }
        }

        // drivers
        let mut nets: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut driver: Vec<Driver> = Vec::new();
        let mut add_driver = |name: &str, d: Driver, p: Pos| -> Result<(), NetlistError> {
            if index.contains_key(name) {
                return Err(err(p, ErrorKind::MultipleDrivers(name.to_string())));
            }
            index.insert(name.to_string(), nets.len());
            nets.push(name.to_string());
            driver.push(d);
            Ok(())
        };
        for (i, n) in self.inputs.iter().enumerate() {
            add_driver(n, Driver::Input, pick(&loc.inputs, i))?;
        }
        for (i, t) in self.ties.iter().enumerate() {
            add_driver(&t.net, Driver::Tie(t.value), pick(&loc.ties, i))?;
        }
        for (i, b) in self.clock_buffers.iter().enumerate() {
            add_driver(&b.id, Driver::ClockBuffer(i), pick(&loc.clock_buffers, i))?;
        }
        for (i, f) in self.flip_flops.iter().enumerate() {
            add_driver(&f.q, Driver::FlipFlop(i), pick(&loc.flip_flops, i)[2])?;
        }
        for (i, g) in self.gates.iter().enumerate() {
            let p = loc.gates.get(i).and_then(|v| v.last().copied()).unwrap_or_default();
            add_driver(&g.output, Driver::Gate(i), p)?;
        }

        let n = nets.len();
        let mut sinks: Vec<Vec<Sink>> = vec![Vec::new(); n];
        let lookup = |name: &str, p: Pos| index.get(name).copied().ok_or_else(|| err(p, ErrorKind::UndeclaredNet(name.to_string())));

        // gates
        for (i, g) in self.gates.iter().enumerate() {
            let gl = loc.gates.get(i);
            if g.inputs.len() != g.gate_type.arity() {
                let p = gl.map_or(Pos::default(), |v| v[0]);
                return Err(err(
                    p,
                    ErrorKind::Invalid(format!(
                        "gate `{}`: {} takes {} input(s), got {}",
                        g.id,
                        g.gate_type,
                        g.gate_type.arity(),
                        g.inputs.len()
                    )),
                ));
            }
            for (pin, name) in g.inputs.iter().enumerate() {
                let p = gl.and_then(|v| v.get(1 + pin).copied()).unwrap_or_default();
                let net = lookup(name, p)?;
                if matches!(driver[net], Driver::ClockBuffer(_)) {
                    return Err(err(p, ErrorKind::Invalid(format!("gate `{}` reads clock net `{name}`", g.id))));
                }
                sinks[net].push(Sink::Gate { gate: i, pin });
            }
        }
        // flip-flops and the clock tree
        let buf_index: HashMap<&str, usize> = self.clock_buffers.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect();
        let mut clock_parent: Vec<Option<Option<usize>>> = vec![None; self.clock_buffers.len()];
        for (i, f) in self.flip_flops.iter().enumerate() {
            let fl = pick(&loc.flip_flops, i);
            let d = lookup(&f.d, fl[1])?;
            if matches!(driver[d], Driver::ClockBuffer(_)) {
                return Err(err(fl[1], ErrorKind::Invalid(format!("flip-flop `{}` samples clock net `{}`", f.id, f.d))));
            }
            sinks[d].push(Sink::FlipFlopD(i));
            if f.clkpath.is_empty() {
                return Err(err(fl[3], ErrorKind::Invalid(format!("flip-flop `{}` has an empty clock path", f.id))));
            }
            let mut parent: Option<usize> = None;
            for b in &f.clkpath {
                let Some(&bi) = buf_index.get(b.as_str()) else {
                    return Err(err(fl[3], ErrorKind::Invalid(format!("flip-flop `{}`: unknown clock buffer `{b}`", f.id))));
                };
                match clock_parent[bi] {
                    None => {
                        clock_parent[bi] = Some(parent);
                        if let Some(pb) = parent {
                            sinks[index[&self.clock_buffers[pb].id]].push(Sink::ClockBuffer(bi));
                        }
                    }
                    Some(prev) if prev != parent => {
                        return Err(err(
                            fl[3],
                            ErrorKind::Invalid(format!("clock buffer `{b}` is fed from two different places")),
                        ));
                    }
                    Some(_) => {}
                }
                parent = Some(bi);
            }
            let leaf = parent.expect("non-empty clock path");
            sinks[index[&self.clock_buffers[leaf].id]].push(Sink::FlipFlopClk(i));
        }
        let clock_parent: Vec<Option<usize>> = clock_parent.into_iter().map(|p| p.flatten()).collect();
        for (i, name) in self.outputs.iter().enumerate() {
            let net = lookup(name, pick(&loc.outputs, i))?;
            sinks[net].push(Sink::Output);
        }

        // routes
        let mut route: Vec<Option<usize>> = vec![None; n];
        for (ri, r) in self.routes.iter().enumerate() {
            let p = pick(&loc.routes, ri);
            let net = lookup(&r.net, p)?;
            if route[net].is_some() {
                return Err(err(p, ErrorKind::Invalid(format!("net `{}` routed twice", r.net))));
            }
            if r.segments.is_empty() {
                return Err(err(p, ErrorKind::Invalid(format!("route of `{}` is empty", r.net))));
            }
            for s in &r.segments {
                if !(s.length_um > 0.0 && s.length_um.is_finite()) {
                    return Err(err(p, ErrorKind::Invalid(format!("route of `{}` has non-positive length {}", r.net, s.length_um))));
                }
                if s.layer == Layer::M5 && matches!(driver[net], Driver::ClockBuffer(_)) {
                    return Err(err(p, ErrorKind::Invalid(format!("clock net `{}` uses M5, which is reserved for data nets", r.net))));
                }
            }
            route[net] = Some(ri);
        }
        if let Some(net) = (0..n).find(|&i| route[i].is_none()) {
            let p = match driver[net] {
                Driver::Input => pick(&loc.inputs, self.inputs.iter().position(|x| *x == nets[net]).unwrap_or(0)),
                Driver::Tie(_) => pick(&loc.ties, self.ties.iter().position(|x| x.net == nets[net]).unwrap_or(0)),
                Driver::Gate(g) => loc.gates.get(g).map_or(Pos::default(), |v| v[0]),
                Driver::FlipFlop(f) => pick(&loc.flip_flops, f)[0],
                Driver::ClockBuffer(b) => pick(&loc.clock_buffers, b),
            };
            return Err(err(p, ErrorKind::MissingRoute(nets[net].clone())));
        }
        for (i, b) in self.clock_buffers.iter().enumerate() {
            if b.drive == Drive::X16 {
                return Err(err(
                    pick(&loc.clock_buffers, i),
                    ErrorKind::Invalid(format!("clock buffer `{}` uses x16, which is reserved for data cells", b.id)),
                ));
            }
        }

        // topological order of gates (Kahn)
        let mut pending: Vec<usize> = vec![0; self.gates.len()];
        for (i, g) in self.gates.iter().enumerate() {
            pending[i] = g.inputs.iter().filter(|x| matches!(driver[index[*x]], Driver::Gate(_))).count();
        }
        let mut ready: Vec<usize> = (0..self.gates.len()).filter(|&i| pending[i] == 0).rev().collect();
        let mut topo = Vec::with_capacity(self.gates.len());
        while let Some(g) = ready.pop() {
            topo.push(g);
            let out = index[&self.gates[g].output];
            for s in sinks[out].iter().rev() {
                if let Sink::Gate { gate, .. } = *s {
                    pending[gate] -= 1;
                    if pending[gate] == 0 {
                        ready.push(gate);
                    }
                }
            }
        }
        if topo.len() != self.gates.len() {
            let g = (0..self.gates.len()).find(|&i| pending[i] > 0).expect("cycle member");
            let p = loc.gates.get(g).map_or(Pos::default(), |v| v[0]);
            return Err(err(p, ErrorKind::CombinationalCycle(self.gates[g].id.clone())));
        }

        Ok(Connectivity { nets, index, driver, sinks, route, clock_parent, topo })
    }

    /// Renders the netlist in the line format accepted by [`parse_netlist`].
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "period {}", self.period);
        for n in &self.inputs {
            let _ = writeln!(s, "input {n}");
        }
        for n in &self.outputs {
            let _ = writeln!(s, "output {n}");
        }
        for t in &self.ties {
            let _ = writeln!(s, "tie {} {}", t.net, u8::from(t.value));
        }
        for b in &self.clock_buffers {
            let _ = writeln!(s, "clkbuf {} drive={}", b.id, b.drive);
        }
        for f in &self.flip_flops {
            let _ = writeln!(s, "ff {} d={} q={} clkpath={}", f.id, f.d, f.q, f.clkpath.join(","));
        }
        for g in &self.gates {
            let _ = writeln!(s, "gate {} {} {} in={} out={}", g.id, g.gate_type, g.drive, g.inputs.join(","), g.output);
        }
        for r in &self.routes {
            let segs: Vec<String> = r.segments.iter().map(|x| format!("{}:{}", x.layer, x.length_um)).collect();
            let _ = writeln!(s, "route {} {}", r.net, segs.join(","));
        }
        s
    }
}
