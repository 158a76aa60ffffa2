// SPDX-License-Identifier: Apache-2.0

//! Static timing: arc graph, K-longest register-to-register paths, delay
//! recomputation under overrides, and aging re-timing.
//!
//! Every net is a lumped wire arc from its driver to all of its sinks; every
//! cell input pin contributes one arc to the cell output. A path keeps three
//! arc lists: LP (clock root to launch flip-flop), DP (launch clk_to_q arc,
//! then alternating wires and cells up to the capture D pin) and CP (clock
//! root to capture flip-flop). Its delay is LP + DP + setup - CP.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::library::{CellLibrary, Drive, GateType, Layer};
use crate::netlist::{Connectivity, Driver, Netlist, NetlistError};

#[derive(Debug, Error, PartialEq)]
pub enum StaError {
    #[error("unknown endpoint `{0}`")]
    UnknownEndpoint(String),
    #[error("unknown arc {0}")]
    UnknownArc(u32),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("increment for `{0}` is negative")]
    NegativeIncrement(String),
    #[error("path {path}: overridden delay is negative ({delay} ps)")]
    NegativeDelay { path: usize, delay: f64 },
    #[error("path dump line {line}: {msg}")]
    Dump { line: usize, msg: String },
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

/// A cell instance that owns timing arcs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Inst {
    Gate(usize),
    FlipFlop(usize),
    ClockBuffer(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ArcKind {
    Cell(Inst),
    Wire(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub kind: ArcKind,
    pub delay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingPath {
    pub id: usize,
    /// Capture flip-flop index.
    pub endpoint: usize,
    /// Launch flip-flop index.
    pub launch: usize,
    pub lp: Vec<u32>,
    pub dp: Vec<u32>,
    pub cp: Vec<u32>,
    pub setup: f64,
    pub delay: f64,
    pub slack: f64,
}

impl TimingPath {
    /// All arcs of the path: LP, DP, then CP.
    pub fn arcs(&self) -> impl Iterator<Item = u32> + '_ {
        self.lp.iter().chain(&self.dp).chain(&self.cp).copied()
    }
}

#[derive(Clone, Debug)]
pub struct TimingGraph {
    pub netlist: Netlist,
    pub conn: Connectivity,
    pub lib: CellLibrary,
    pub arcs: Vec<Arc>,
    /// Per flip-flop, the clock-tree arcs from the root to its clock pin.
    pub clock_arcs: Vec<Vec<u32>>,
    pub clk_to_q_arc: Vec<u32>,
    /// Per gate, one arc per input pin.
    pub gate_arcs: Vec<Vec<u32>>,
    pub clock_buffer_arc: Vec<u32>,
    pub wire_arc: Vec<u32>,
    ff_index: HashMap<String, usize>,
    /// Longest arrival (LP + DP so far) at each net's sink side; -inf when no
    /// flip-flop reaches the net.
    arrival_in: Vec<f64>,
}

fn sum(arcs: &[u32], delays: &[f64]) -> f64 {
    arcs.iter().map(|&a| delays[a as usize]).sum()
}

impl TimingGraph {
    pub fn elaborate(netlist: &Netlist, lib: &CellLibrary) -> Result<Self, NetlistError> {
        let conn = netlist.validate()?;
        let mut arcs = Vec::new();
        let mut push = |kind, delay| {
            arcs.push(Arc { kind, delay });
            (arcs.len() - 1) as u32
        };
        let clock_buffer_arc: Vec<u32> = netlist
            .clock_buffers
            .iter()
            .enumerate()
            .map(|(i, b)| push(ArcKind::Cell(Inst::ClockBuffer(i)), lib.delay(GateType::Buf, b.drive)))
            .collect();
        let clk_to_q_arc: Vec<u32> =
            (0..netlist.flip_flops.len()).map(|i| push(ArcKind::Cell(Inst::FlipFlop(i)), lib.clk_to_q)).collect();
        let gate_arcs: Vec<Vec<u32>> = netlist
            .gates
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let d = lib.delay(g.gate_type, g.drive);
                (0..g.inputs.len()).map(|_| push(ArcKind::Cell(Inst::Gate(i)), d)).collect()
            })
            .collect();
        let wire_arc: Vec<u32> = (0..conn.nets.len())
            .map(|n| {
                let r = &netlist.routes[conn.route[n].expect("validated route")];
                let d = r.segments.iter().map(|s| lib.wire_delay(s.layer, s.length_um)).sum();
                push(ArcKind::Wire(n), d)
            })
            .collect();

        let clock_arcs = netlist
            .flip_flops
            .iter()
            .map(|f| {
                f.clkpath
                    .iter()
                    .flat_map(|b| {
                        let net = conn.index[b];
                        let bi = match conn.driver[net] {
                            Driver::ClockBuffer(bi) => bi,
                            _ => unreachable!("clock path names a buffer"),
                        };
                        [clock_buffer_arc[bi], wire_arc[net]]
                    })
                    .collect()
            })
            .collect();
        let ff_index = netlist.flip_flops.iter().enumerate().map(|(i, f)| (f.id.clone(), i)).collect();
        let mut g = TimingGraph {
            netlist: netlist.clone(),
            conn,
            lib: lib.clone(),
            arcs,
            clock_arcs,
            clk_to_q_arc,
            gate_arcs,
            clock_buffer_arc,
            wire_arc,
            ff_index,
            arrival_in: Vec::new(),
        };
        g.arrival_in = g.arrivals();
        Ok(g)
    }

    pub fn delays(&self) -> Vec<f64> {
        self.arcs.iter().map(|a| a.delay).collect()
    }

    pub fn ff(&self, id: &str) -> Option<usize> {
        self.ff_index.get(id).copied()
    }

    fn lp_delay(&self, ff: usize) -> f64 {
        self.clock_arcs[ff].iter().map(|&a| self.arcs[a as usize].delay).sum()
    }

    fn arrivals(&self) -> Vec<f64> {
        let n = self.conn.nets.len();
        let mut out = vec![f64::NEG_INFINITY; n];
        let mut inn = vec![f64::NEG_INFINITY; n];
        let wire = |net: usize| self.arcs[self.wire_arc[net] as usize].delay;
        for (f, ff) in self.netlist.flip_flops.iter().enumerate() {
            let q = self.conn.index[&ff.q];
            out[q] = self.lp_delay(f) + self.arcs[self.clk_to_q_arc[f] as usize].delay;
            inn[q] = out[q] + wire(q);
        }
        for &g in &self.conn.topo {
            let gate = &self.netlist.gates[g];
            let o = self.conn.index[&gate.output];
            let mut best = f64::NEG_INFINITY;
            for (pin, name) in gate.inputs.iter().enumerate() {
                let a = inn[self.conn.index[name]] + self.arcs[self.gate_arcs[g][pin] as usize].delay;
                if a > best {
                    best = a;
                }
            }
            out[o] = best;
            inn[o] = best + wire(o);
        }
        inn
    }

    /// Largest register-to-register path delay, or -inf if there is none.
    pub fn critical_delay(&self) -> f64 {
        (0..self.netlist.flip_flops.len())
            .map(|e| {
                let d = self.conn.index[&self.netlist.flip_flops[e].d];
                self.arrival_in[d] + self.lib.setup - self.lp_delay(e)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// LP + DP + setup - CP under the given per-arc delays.
    pub fn delay_with(&self, path: &TimingPath, delays: &[f64]) -> f64 {
        let lp = sum(&path.lp, delays);
        let dp = sum(&path.dp, delays);
        let cp = sum(&path.cp, delays);
        lp + dp + path.setup - cp
    }

    /// Path delay with some arc delays replaced.
    pub fn path_delay(&self, path: &TimingPath, overrides: &HashMap<u32, f64>) -> Result<f64, StaError> {
        let mut delays = self.delays();
        for (&a, &d) in overrides {
            let slot = delays.get_mut(a as usize).ok_or(StaError::UnknownArc(a))?;
            *slot = d;
        }
        let d = self.delay_with(path, &delays);
        if d < 0.0 {
            return Err(StaError::NegativeDelay { path: path.id, delay: d });
        }
        Ok(d)
    }

    fn make_path(&self, launch: usize, endpoint: usize, dp: Vec<u32>) -> TimingPath {
        let mut p = TimingPath {
            id: 0,
            endpoint,
            launch,
            lp: self.clock_arcs[launch].clone(),
            dp,
            cp: self.clock_arcs[endpoint].clone(),
            setup: self.lib.setup,
            delay: 0.0,
            slack: 0.0,
        };
        p.delay = self.delay_with(&p, &self.delays());
        p.slack = self.netlist.period - p.delay;
        p
    }

    /// The `k` longest register-to-register paths into flip-flop `endpoint`,
    /// longest first; ties are broken by the lexicographic order of the DP
    /// arc ids, then the LP arc ids. Ids are the rank, from 0.
    pub fn k_longest_paths(&self, endpoint: &str, k: usize) -> Result<Vec<TimingPath>, StaError> {
        let e = self.ff(endpoint).ok_or_else(|| StaError::UnknownEndpoint(endpoint.to_string()))?;
        Ok(self.k_longest_into(e, k))
    }

    fn k_longest_into(&self, e: usize, k: usize) -> Vec<TimingPath> {
        if k == 0 {
            return Vec::new();
        }
        let d_net = self.conn.index[&self.netlist.flip_flops[e].d];
        if self.arrival_in[d_net] == f64::NEG_INFINITY {
            return Vec::new();
        }

        // Best-first over partial paths grown backwards from the D pin. The
        // arrival table is an exact bound on the best completion, so complete
        // paths pop in non-increasing delay order.
        #[derive(Clone, Copy)]
        enum At {
            NetIn(usize),
            NetOut(usize),
        }
        struct Entry {
            priority: f64,
            seq: u64,
            at: At,
            suffix: f64,
            chain: usize,
        }
        impl PartialEq for Entry {
            fn eq(&self, o: &Self) -> bool {
                self.cmp(o) == Ordering::Equal
            }
        }
        impl Eq for Entry {}
        impl PartialOrd for Entry {
            fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
                Some(self.cmp(o))
            }
        }
        impl Ord for Entry {
            fn cmp(&self, o: &Self) -> Ordering {
                self.priority.total_cmp(&o.priority).then(o.seq.cmp(&self.seq))
            }
        }

        // arena of (arc, next) links; usize::MAX terminates
        let mut arena: Vec<(u32, usize)> = Vec::new();
        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        heap.push(Entry { priority: self.arrival_in[d_net], seq, at: At::NetIn(d_net), suffix: 0.0, chain: usize::MAX });
        let mut done: Vec<(f64, usize, usize)> = Vec::new();
        let scale = self.arrival_in[d_net].abs().max(1.0);
        let eps = 1e-9 * scale;

        while let Some(top) = heap.pop() {
            if done.len() >= k && top.priority < done[k - 1].0 - eps {
                break;
            }
            let mut push = |at: At, arc: u32, bound: f64, heap: &mut BinaryHeap<Entry>| {
                let d = self.arcs[arc as usize].delay;
                arena.push((arc, top.chain));
                seq += 1;
                heap.push(Entry { priority: bound + d + top.suffix, seq, at, suffix: top.suffix + d, chain: arena.len() - 1 });
            };
            match top.at {
                At::NetIn(net) => {
                    // the wire arc, back to the driver side
                    let bound = self.arrival_in[net] - self.arcs[self.wire_arc[net] as usize].delay;
                    push(At::NetOut(net), self.wire_arc[net], bound, &mut heap);
                }
                At::NetOut(net) => match self.conn.driver[net] {
                    Driver::Gate(g) => {
                        for (pin, name) in self.netlist.gates[g].inputs.iter().enumerate() {
                            let src = self.conn.index[name];
                            if self.arrival_in[src] > f64::NEG_INFINITY {
                                push(At::NetIn(src), self.gate_arcs[g][pin], self.arrival_in[src], &mut heap);
                            }
                        }
                    }
                    Driver::FlipFlop(f) => {
                        let arc = self.clk_to_q_arc[f];
                        arena.push((arc, top.chain));
                        let total = top.suffix + self.arcs[arc as usize].delay + self.lp_delay(f);
                        done.push((total, f, arena.len() - 1));
                    }
                    _ => {}
                },
            }
        }

        let mut paths: Vec<TimingPath> = done
            .into_iter()
            .map(|(_, launch, mut link)| {
                let mut dp = Vec::new();
                while link != usize::MAX {
                    dp.push(arena[link].0);
                    link = arena[link].1;
                }
                self.make_path(launch, e, dp)
            })
            .collect();
        paths.sort_by(|a, b| b.delay.total_cmp(&a.delay).then_with(|| a.dp.cmp(&b.dp)).then_with(|| a.lp.cmp(&b.lp)));
        paths.truncate(k);
        for (i, p) in paths.iter_mut().enumerate() {
            p.id = i;
        }
        paths
    }

    /// K longest paths into every flip-flop, in flip-flop order, numbered
    /// from 0 across the whole list.
    pub fn enumerate_paths(&self, k: usize) -> Vec<TimingPath> {
        let mut all = Vec::new();
        for e in 0..self.netlist.flip_flops.len() {
            all.extend(self.k_longest_into(e, k));
        }
        for (i, p) in all.iter_mut().enumerate() {
            p.id = i;
        }
        all
    }

    /// Instance name owning a cell arc.
    pub fn inst_name(&self, inst: Inst) -> &str {
        match inst {
            Inst::Gate(i) => &self.netlist.gates[i].id,
            Inst::FlipFlop(i) => &self.netlist.flip_flops[i].id,
            Inst::ClockBuffer(i) => &self.netlist.clock_buffers[i].id,
        }
    }

    /// Every cell instance in a fixed order: clock buffers, flip-flops, gates.
    pub fn instances(&self) -> Vec<Inst> {
        (0..self.netlist.clock_buffers.len())
            .map(Inst::ClockBuffer)
            .chain((0..self.netlist.flip_flops.len()).map(Inst::FlipFlop))
            .chain((0..self.netlist.gates.len()).map(Inst::Gate))
            .collect()
    }

    /// Name of the net an instance drives.
    pub fn inst_output(&self, inst: Inst) -> &str {
        match inst {
            Inst::Gate(i) => &self.netlist.gates[i].output,
            Inst::FlipFlop(i) => &self.netlist.flip_flops[i].q,
            Inst::ClockBuffer(i) => &self.netlist.clock_buffers[i].id,
        }
    }

    /// Library cell used for an instance; flip-flops are reported as BUF x1.
    pub fn inst_cell(&self, inst: Inst) -> (GateType, Drive) {
        match inst {
            Inst::Gate(i) => (self.netlist.gates[i].gate_type, self.netlist.gates[i].drive),
            Inst::FlipFlop(_) => (GateType::Buf, Drive::X1),
            Inst::ClockBuffer(i) => (GateType::Buf, self.netlist.clock_buffers[i].drive),
        }
    }

    /// Route segments behind a wire arc.
    pub fn wire_segments(&self, net: usize) -> impl Iterator<Item = (Layer, f64)> + '_ {
        let r = &self.netlist.routes[self.conn.route[net].expect("validated route")];
        r.segments.iter().map(|s| (s.layer, s.length_um))
    }

    /// Per-arc delay change given a per-instance increment table: cell arcs
    /// take their instance's increment, wires take 0.
    pub fn arc_increments(&self, increments: &HashMap<String, f64>) -> Result<Vec<f64>, StaError> {
        let mut by_inst: HashMap<Inst, f64> = HashMap::new();
        let names: HashMap<&str, Inst> = self.instances().into_iter().map(|i| (self.inst_name(i), i)).collect();
        for (name, &v) in increments {
            let inst = *names.get(name.as_str()).ok_or_else(|| StaError::UnknownInstance(name.clone()))?;
            if v < 0.0 {
                return Err(StaError::NegativeIncrement(name.clone()));
            }
            by_inst.insert(inst, v);
        }
        Ok(self
            .arcs
            .iter()
            .map(|a| match a.kind {
                ArcKind::Cell(i) => by_inst.get(&i).copied().unwrap_or(0.0),
                ArcKind::Wire(_) => 0.0,
            })
            .collect())
    }

    /// Path delay change when every cell is slowed by its increment: LP and
    /// DP increments add, CP increments subtract.
    pub fn retime_increments(&self, paths: &[TimingPath], increments: &HashMap<String, f64>) -> Result<Vec<f64>, StaError> {
        let inc = self.arc_increments(increments)?;
        Ok(paths.iter().map(|p| retime_with(p, &inc)).collect())
    }

    /// Renders paths in the `.paths` line format.
    pub fn emit_paths(&self, paths: &[TimingPath]) -> String {
        let join = |v: &[u32]| v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        for p in paths {
            let _ = writeln!(
                s,
                "path {} ep={} d={} s={} lp={} dp={} cp={}",
                p.id,
                self.netlist.flip_flops[p.endpoint].id,
                p.delay,
                p.slack,
                join(&p.lp),
                join(&p.dp),
                join(&p.cp)
            );
        }
        s
    }

    /// Reads a `.paths` dump back against this graph, checking that every
    /// record is consistent with it.
    pub fn parse_paths(&self, text: &str) -> Result<Vec<TimingPath>, StaError> {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let bad = |msg: String| StaError::Dump { line: ln, msg };
            let toks: Vec<&str> = body.split_whitespace().collect();
            if toks.len() != 8 || toks[0] != "path" {
                return Err(bad(format!("expected 8 fields starting with `path`, found `{body}`")));
            }
            let field = |t: &str, key: &str| -> Result<String, StaError> {
                t.strip_prefix(key).map(str::to_string).ok_or_else(|| bad(format!("expected `{key}...`, found `{t}`")))
            };
            let arcs = |s: String| -> Result<Vec<u32>, StaError> {
                if s.is_empty() {
                    return Ok(Vec::new());
                }
                s.split(',')
                    .map(|a| {
                        let v: u32 = a.parse().map_err(|_| bad(format!("bad arc id `{a}`")))?;
                        if v as usize >= self.arcs.len() {
                            return Err(StaError::UnknownArc(v));
                        }
                        Ok(v)
                    })
                    .collect()
            };
            let id: usize = toks[1].parse().map_err(|_| bad(format!("bad path id `{}`", toks[1])))?;
            let ep = field(toks[2], "ep=")?;
            let e = self.ff(&ep).ok_or(StaError::UnknownEndpoint(ep))?;
            let d: f64 = field(toks[3], "d=")?.parse().map_err(|_| bad("bad delay".into()))?;
            let s: f64 = field(toks[4], "s=")?.parse().map_err(|_| bad("bad slack".into()))?;
            let lp = arcs(field(toks[5], "lp=")?)?;
            let dp = arcs(field(toks[6], "dp=")?)?;
            let cp = arcs(field(toks[7], "cp=")?)?;
            let launch = match dp.first().map(|&a| self.arcs[a as usize].kind) {
                Some(ArcKind::Cell(Inst::FlipFlop(f))) => f,
                _ => return Err(bad("DP must start with a clk_to_q arc".into())),
            };
            if lp != self.clock_arcs[launch] || cp != self.clock_arcs[e] {
                return Err(bad("clock arcs do not match the launch and capture flip-flops".into()));
            }
            let mut p = self.make_path(launch, e, dp);
            p.id = id;
            if p.delay != d || p.slack != s {
                return Err(bad(format!("recorded delay {d} / slack {s} disagree with the graph ({} / {})", p.delay, p.slack)));
            }
            out.push(p);
        }
        Ok(out)
    }
}

/// LP + DP - CP of per-arc increments (setup does not age).
pub fn retime_with(path: &TimingPath, arc_increment: &[f64]) -> f64 {
    sum(&path.lp, arc_increment) + sum(&path.dp, arc_increment) - sum(&path.cp, arc_increment)
}
