// SPDX-License-Identifier: Apache-2.0

//! Zero-delay, cycle-based logic simulation, 64 cycles per machine word.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{Driver, Netlist, NetlistError};
use crate::seeds;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetActivity {
    /// Fraction of cycles the net sits at logic 0.
    pub dc: f64,
    /// Number of value changes between consecutive cycles.
    pub tc: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityProfile {
    pub cycles: u64,
    pub nets: BTreeMap<String, NetActivity>,
}

impl ActivityProfile {
    pub fn get(&self, net: &str) -> Option<NetActivity> {
        self.nets.get(net).copied()
    }

    /// Transitions per cycle of a net.
    pub fn tc_rate(&self, a: NetActivity) -> f64 {
        a.tc as f64 / self.cycles as f64
    }

    pub fn emit(&self) -> String {
        let mut s = format!("cycles {}\n", self.cycles);
        for (n, a) in &self.nets {
            let _ = writeln!(s, "net {n} dc={} tc={}", a.dc, a.tc);
        }
        s
    }
}

/// Parses the `.act` format written by [`ActivityProfile::emit`].
pub fn parse_activity(text: &str) -> Result<ActivityProfile, String> {
    let mut cycles = None;
    let mut nets = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        match toks.as_slice() {
            ["cycles", n] => cycles = Some(n.parse::<u64>().map_err(|_| format!("{ln}: bad cycle count `{n}`"))?),
            ["net", name, dc, tc] => {
                let dc = dc
                    .strip_prefix("dc=")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| format!("{ln}: expected dc=<float>, found `{dc}`"))?;
                let tc = tc
                    .strip_prefix("tc=")
                    .and_then(|v| v.parse::<u64>().ok())
                    .ok_or_else(|| format!("{ln}: expected tc=<int>, found `{tc}`"))?;
                if !(0.0..=1.0).contains(&dc) {
                    return Err(format!("{ln}: dc {dc} outside [0, 1]"));
                }
                if nets.insert(name.to_string(), NetActivity { dc, tc }).is_some() {
                    return Err(format!("{ln}: net `{name}` listed twice"));
                }
            }
            _ => return Err(format!("{ln}: unrecognized line `{body}`")),
        }
    }
    let cycles = cycles.ok_or("missing `cycles` header")?;
    if let Some((n, a)) = nets.iter().find(|(_, a)| a.tc > cycles) {
        return Err(format!("net `{n}`: tc {} exceeds {cycles} cycles", a.tc));
    }
    Ok(ActivityProfile { cycles, nets })
}

/// Simulates `cycles` clock cycles. Primary inputs and flip-flop outputs take
/// fresh uniform random values every cycle, except flip-flops whose D pin is
/// a tie net, which hold the tie value. Clock nets are recorded with a 50%
/// duty cycle and one transition per cycle.
pub fn simulate_activity(netlist: &Netlist, cycles: u64, seed: u64) -> Result<ActivityProfile, NetlistError> {
    assert!(cycles >= 1, "simulate at least one cycle");
    let conn = netlist.validate()?;
    let n = conn.nets.len();
    let mut rng = seeds::rng(seed);

    // constant value per net where known up front
    let mut fixed: Vec<Option<u64>> = vec![None; n];
    for (i, d) in conn.driver.iter().enumerate() {
        match *d {
            Driver::Tie(v) => fixed[i] = Some(if v { !0 } else { 0 }),
            Driver::FlipFlop(f) => {
                let dn = conn.index[&netlist.flip_flops[f].d];
                if let Driver::Tie(v) = conn.driver[dn] {
                    fixed[i] = Some(if v { !0 } else { 0 });
                }
            }
            _ => {}
        }
    }
    let random_src: Vec<usize> = (0..n)
        .filter(|&i| fixed[i].is_none() && matches!(conn.driver[i], Driver::Input | Driver::FlipFlop(_)))
        .collect();
    let gate_io: Vec<(usize, usize, usize)> = conn
        .topo
        .iter()
        .map(|&g| {
            let gate = &netlist.gates[g];
            let a = conn.index[&gate.inputs[0]];
            let b = gate.inputs.get(1).map_or(a, |x| conn.index[x]);
            (g, a, b)
        })
        .collect();
    let gate_out: Vec<usize> = netlist.gates.iter().map(|g| conn.index[&g.output]).collect();

    let mut val = vec![0u64; n];
    let mut zeros = vec![0u64; n];
    let mut toggles = vec![0u64; n];
    let mut last_bit = vec![0u64; n];
    let words = cycles.div_ceil(64);
    for w in 0..words {
        let valid = if w + 1 == words && cycles % 64 != 0 { cycles % 64 } else { 64 };
        let mask = if valid == 64 { !0u64 } else { (1u64 << valid) - 1 };
        for i in 0..n {
            if let Some(c) = fixed[i] {
                val[i] = c;
            }
        }
        for &i in &random_src {
            val[i] = rng.next_u64();
        }
        for &(g, a, b) in &gate_io {
            val[gate_out[g]] = netlist.gates[g].gate_type.eval_word(val[a], val[b]);
        }
        for i in 0..n {
            if matches!(conn.driver[i], Driver::ClockBuffer(_)) {
                continue;
            }
            let v = val[i] & mask;
            zeros[i] += (!val[i] & mask).count_ones() as u64;
            let prev = if w == 0 { v & 1 } else { last_bit[i] };
            let shifted = (v << 1) | prev;
            toggles[i] += ((v ^ shifted) & mask).count_ones() as u64;
            last_bit[i] = (v >> (valid - 1)) & 1;
        }
    }

    let mut nets = BTreeMap::new();
    for i in 0..n {
        let a = if matches!(conn.driver[i], Driver::ClockBuffer(_)) {
            NetActivity { dc: 0.5, tc: cycles }
        } else {
            NetActivity { dc: zeros[i] as f64 / cycles as f64, tc: toggles[i] }
        };
        nets.insert(conn.nets[i].clone(), a);
    }
    Ok(ActivityProfile { cycles, nets })
}

/// Smallest and largest toggle count over all nets; None for an empty profile.
pub fn tc_bounds(activity: &ActivityProfile) -> Option<(u64, u64)> {
    let min = activity.nets.values().map(|a| a.tc).min()?;
    let max = activity.nets.values().map(|a| a.tc).max()?;
    Some((min, max))
}
