// SPDX-License-Identifier: Apache-2.0

//! Seeded random sequential designs.
//!
//! Every regular flip-flop captures the output of its own logic cone. A cone
//! is either busy, reading regular flip-flops whose outputs are random every
//! cycle, or idle, reading configuration flip-flops that hold a tied
//! constant. Idle cones pick gate order and side-input constants so that as
//! many nets as possible sit at logic 0, which leaves them nearly unstressed.
//! Both kinds draw their gate types, drive strengths and routes from the same
//! distributions.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClockBuffer, FlipFlop, Gate, Netlist, Route, Segment, Tie};
use crate::library::{CellLibrary, Drive, GateType, Layer};
use crate::seeds;
use crate::sta::TimingGraph;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub num_ffs: usize,
    pub gates_per_cone: usize,
    pub depth: usize,
    pub seed: u64,
    pub guardband_fraction: f64,
    /// Share of cones fed by constant configuration flip-flops.
    pub idle_fraction: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec { num_ffs: 64, gates_per_cone: 48, depth: 24, seed: 1, guardband_fraction: 0.1, idle_fraction: 0.5 }
    }
}

const TYPE_WEIGHTS: [(GateType, u32); 7] = [
    (GateType::Inv, 2),
    (GateType::Buf, 2),
    (GateType::Nand2, 3),
    (GateType::Nor2, 3),
    (GateType::And2, 3),
    (GateType::Or2, 3),
    (GateType::Xor2, 2),
];

const DRIVE_WEIGHTS: [(Drive, u32); 6] =
    [(Drive::X0, 2), (Drive::X1, 5), (Drive::X2, 4), (Drive::X4, 3), (Drive::X8, 2), (Drive::X16, 1)];

const FFS_PER_LEAF: usize = 8;

fn weighted<T: Copy>(rng: &mut ChaCha8Rng, table: &[(T, u32)]) -> T {
    let total: u32 = table.iter().map(|x| x.1).sum();
    let mut r = rng.random_range(0..total);
    for &(v, w) in table {
        if r < w {
            return v;
        }
        r -= w;
    }
    table[table.len() - 1].0
}

fn data_route(rng: &mut ChaCha8Rng) -> Vec<Segment> {
    let n = rng.random_range(1..=3);
    (0..n)
        .map(|_| {
            let layer = Layer::ALL[rng.random_range(0..5)];
            let (lo, hi) = match layer {
                Layer::M1 => (2.0, 30.0),
                Layer::M2 => (5.0, 60.0),
                Layer::M3 => (10.0, 100.0),
                Layer::M4 => (20.0, 150.0),
                Layer::M5 => (40.0, 200.0),
            };
            Segment { layer, length_um: round2(rng.random_range(lo..hi)) }
        })
        .collect()
}

fn clock_route(rng: &mut ChaCha8Rng, scale: f64) -> Vec<Segment> {
    let n = rng.random_range(1..=2);
    (0..n)
        .map(|_| {
            let layer = Layer::ALL[rng.random_range(0..4)];
            Segment { layer, length_um: round2(scale * rng.random_range(20.0..120.0)) }
        })
        .collect()
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Output value of a gate, or None if an input is unknown.
fn eval(t: GateType, a: bool, b: bool) -> bool {
    t.eval_word(u64::from(a), u64::from(b)) & 1 == 1
}

/// Chooses values for the free inputs (None entries) that drive the output
/// to 0, if possible.
fn zero_assignment(t: GateType, a: Option<bool>, b: Option<bool>) -> Option<(bool, bool)> {
    let opts = |x: Option<bool>| match x {
        Some(v) => vec![v],
        None => vec![false, true],
    };
    let bs = if t.arity() == 1 { vec![false] } else { opts(b) };
    for &va in &opts(a) {
        for &vb in &bs {
            if !eval(t, va, vb) {
                return Some((va, vb));
            }
        }
    }
    None
}

enum Src {
    Ff,
    Gate(usize),
}

struct Builder<'a> {
    rng: ChaCha8Rng,
    spec: &'a GenSpec,
    nl: Netlist,
    /// Per config flip-flop value, the Q nets available.
    config_q: [Vec<String>; 2],
    regular_q: Vec<String>,
}

impl Builder<'_> {
    fn source_net(&mut self, idle: bool, want: bool) -> String {
        if idle {
            self.config_q[usize::from(want)].choose(&mut self.rng).expect("config pool").clone()
        } else {
            self.regular_q.choose(&mut self.rng).expect("regular pool").clone()
        }
    }

    /// Builds one cone and returns its output net.
    fn cone(&mut self, cone: usize, idle: bool) -> String {
        let g = self.spec.gates_per_cone;
        let d = self.spec.depth;
        // level sizes: at least one gate per level, a single gate on top
        let mut sizes = vec![1usize; d];
        for _ in 0..g - d {
            let lvl = if d == 1 { 0 } else { self.rng.random_range(0..d - 1) };
            sizes[lvl] += 1;
        }
        if d > 1 {
            sizes[d - 1] = 1;
            let placed: usize = sizes.iter().sum();
            sizes[0] += g - placed;
        }
        let mut pool: Vec<GateType> = (0..g).map(|_| weighted(&mut self.rng, &TYPE_WEIGHTS)).collect();
        pool.shuffle(&mut self.rng);

        // (output net, constant value in idle cones)
        let mut made: Vec<(String, bool)> = Vec::new();
        let mut levels: Vec<Vec<usize>> = Vec::new();
        let mut k = 0usize;
        for (lvl, &size) in sizes.iter().enumerate() {
            let mut this = Vec::new();
            for _ in 0..size {
                let main = if lvl == 0 { Src::Ff } else { Src::Gate(*levels[lvl - 1].choose(&mut self.rng).expect("level")) };
                let side = if lvl == 0 || self.rng.random_bool(0.5) {
                    Src::Ff
                } else {
                    let l = self.rng.random_range(0..lvl);
                    Src::Gate(*levels[l].choose(&mut self.rng).expect("level"))
                };
                let known = |s: &Src| match s {
                    Src::Ff => None,
                    Src::Gate(i) => Some(made[*i].1),
                };
                let (va, vb) = (known(&main), known(&side));
                let pick = if idle {
                    let good: Vec<usize> =
                        (0..pool.len()).filter(|&i| zero_assignment(pool[i], va, vb).is_some()).collect();
                    match good.choose(&mut self.rng) {
                        Some(&i) => i,
                        None => self.rng.random_range(0..pool.len()),
                    }
                } else {
                    self.rng.random_range(0..pool.len())
                };
                let t = pool.swap_remove(pick);
                let (fa, fb) = zero_assignment(t, va, vb).unwrap_or((va.unwrap_or(false), vb.unwrap_or(false)));
                let net_a = match main {
                    Src::Ff => self.source_net(idle, fa),
                    Src::Gate(i) => made[i].0.clone(),
                };
                let mut inputs = vec![net_a];
                if t.arity() == 2 {
                    let mut net_b = match side {
                        Src::Ff => self.source_net(idle, fb),
                        Src::Gate(i) => made[i].0.clone(),
                    };
                    // both pins on one net is legal but not useful
                    let mut tries = 0;
                    while net_b == inputs[0] && tries < 8 {
                        net_b = self.source_net(idle, fb);
                        tries += 1;
                    }
                    inputs.push(net_b);
                }
                let value = eval(t, fa, fb);
                let id = format!("c{cone}g{k}");
                let out = format!("c{cone}n{k}");
                let drive = weighted(&mut self.rng, &DRIVE_WEIGHTS);
                self.nl.gates.push(Gate { id, gate_type: t, drive, inputs, output: out.clone() });
                this.push(made.len());
                made.push((out, value));
                k += 1;
            }
            levels.push(this);
        }
        made[levels[d - 1][0]].0.clone()
    }
}

/// Generates a design, then sets the clock period to the longest register to
/// register path times (1 + guardband).
pub fn generate_netlist(spec: &GenSpec, lib: &CellLibrary) -> Result<Netlist, String> {
    if spec.num_ffs < 1 || spec.gates_per_cone < 1 || spec.depth < 1 {
        return Err("num_ffs, gates_per_cone and depth must all be at least 1".into());
    }
    if spec.depth > spec.gates_per_cone {
        return Err(format!("depth {} exceeds gates_per_cone {}", spec.depth, spec.gates_per_cone));
    }
    if !(0.0..=0.2).contains(&spec.guardband_fraction) {
        return Err(format!("guardband_fraction {} outside [0, 0.2]", spec.guardband_fraction));
    }
    if !(0.0..1.0).contains(&spec.idle_fraction) {
        return Err(format!("idle_fraction {} outside [0, 1)", spec.idle_fraction));
    }
    let mut rng = seeds::rng(seeds::child(spec.seed, 0x6e65_746c));
    let n = spec.num_ffs;
    let n_idle = ((n as f64) * spec.idle_fraction).round() as usize;
    let n_config = if n_idle == 0 {
        0
    } else {
        (((n as f64) * spec.idle_fraction / (1.0 - spec.idle_fraction)).round() as usize).max(2)
    };
    let mut idle = vec![false; n];
    idle[..n_idle].fill(true);
    idle.shuffle(&mut rng);

    let mut b = Builder {
        rng,
        spec,
        nl: Netlist::default(),
        config_q: [Vec::new(), Vec::new()],
        regular_q: (0..n).map(|i| format!("q{i}")).collect(),
    };
    if n_config > 0 {
        b.nl.ties.push(Tie { net: "tie0".into(), value: false });
        b.nl.ties.push(Tie { net: "tie1".into(), value: true });
    }

    // clock tree: root, group buffers, leaf buffers
    let total_ffs = n + n_config;
    let leaves = total_ffs.div_ceil(FFS_PER_LEAF);
    let groups = ((leaves as f64).sqrt().ceil() as usize).max(1);
    b.nl.clock_buffers.push(ClockBuffer { id: "cb_root".into(), drive: Drive::X8 });
    for gi in 0..groups {
        let drive = [Drive::X4, Drive::X8][b.rng.random_range(0..2)];
        b.nl.clock_buffers.push(ClockBuffer { id: format!("cb_g{gi}"), drive });
    }
    let clock_drives = [Drive::X0, Drive::X1, Drive::X2, Drive::X4, Drive::X8];
    for li in 0..leaves {
        let drive = clock_drives[b.rng.random_range(0..clock_drives.len())];
        b.nl.clock_buffers.push(ClockBuffer { id: format!("cb_l{li}"), drive });
    }
    let mut slots: Vec<usize> = (0..total_ffs).map(|i| i % leaves).collect();
    slots.shuffle(&mut b.rng);
    let clkpath = |leaf: usize| vec!["cb_root".to_string(), format!("cb_g{}", leaf % groups), format!("cb_l{leaf}")];

    for j in 0..n_config {
        let v = j % 2;
        b.config_q[v].push(format!("cq{j}"));
    }
    let mut d_nets = Vec::with_capacity(n);
    for (i, &is_idle) in idle.iter().enumerate() {
        d_nets.push(b.cone(i, is_idle));
    }
    for (i, d) in d_nets.into_iter().enumerate() {
        b.nl.flip_flops.push(FlipFlop { id: format!("ff{i}"), d, q: format!("q{i}"), clkpath: clkpath(slots[i]) });
    }
    for j in 0..n_config {
        let d = if j % 2 == 0 { "tie0" } else { "tie1" };
        b.nl.flip_flops.push(FlipFlop {
            id: format!("cf{j}"),
            d: d.into(),
            q: format!("cq{j}"),
            clkpath: clkpath(slots[n + j]),
        });
    }

    // routes for every net, plus primary outputs for dangling gate outputs
    let mut nl = b.nl;
    let mut rng = b.rng;
    let mut used = std::collections::HashSet::new();
    for g in &nl.gates {
        used.extend(g.inputs.iter().cloned());
    }
    for f in &nl.flip_flops {
        used.insert(f.d.clone());
    }
    nl.outputs = nl.gates.iter().filter(|g| !used.contains(&g.output)).map(|g| g.output.clone()).collect();
    let mut routes = Vec::new();
    for t in &nl.ties {
        routes.push(Route { net: t.net.clone(), segments: vec![Segment { layer: Layer::M1, length_um: 5.0 }] });
    }
    for cb in &nl.clock_buffers {
        let scale = if cb.id == "cb_root" { 4.0 } else if cb.id.starts_with("cb_g") { 2.0 } else { 1.0 };
        routes.push(Route { net: cb.id.clone(), segments: clock_route(&mut rng, scale) });
    }
    for f in &nl.flip_flops {
        routes.push(Route { net: f.q.clone(), segments: data_route(&mut rng) });
    }
    for g in &nl.gates {
        routes.push(Route { net: g.output.clone(), segments: data_route(&mut rng) });
    }
    nl.routes = routes;

    // provisional period, then the guardbanded critical path
    nl.period = 1.0;
    let graph = TimingGraph::elaborate(&nl, lib).map_err(|e| e.to_string())?;
    let critical = graph.critical_delay();
    if !(critical > 0.0) {
        return Err("generated design has no register-to-register path".into());
    }
    nl.period = critical * (1.0 + spec.guardband_fraction);
    Ok(nl)
}
