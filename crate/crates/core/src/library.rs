// SPDX-License-Identifier: Apache-2.0

//! Standard-cell library: gate types, drive strengths, metal layers and their
//! nominal delays.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GateType {
    Inv,
    Buf,
    Nand2,
    Nor2,
    And2,
    Or2,
    Xor2,
}

impl GateType {
    pub const ALL: [GateType; 7] =
        [GateType::Inv, GateType::Buf, GateType::Nand2, GateType::Nor2, GateType::And2, GateType::Or2, GateType::Xor2];

    pub fn arity(self) -> usize {
        match self {
            GateType::Inv | GateType::Buf => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateType::Inv => "INV",
            GateType::Buf => "BUF",
            GateType::Nand2 => "NAND2",
            GateType::Nor2 => "NOR2",
            GateType::And2 => "AND2",
            GateType::Or2 => "OR2",
            GateType::Xor2 => "XOR2",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Evaluates 64 cycles at once. `b` is ignored by one-input gates.
    pub fn eval_word(self, a: u64, b: u64) -> u64 {
        match self {
            GateType::Inv => !a,
            GateType::Buf => a,
            GateType::Nand2 => !(a & b),
            GateType::Nor2 => !(a | b),
            GateType::And2 => a & b,
            GateType::Or2 => a | b,
            GateType::Xor2 => a ^ b,
        }
    }
}

impl fmt::Display for GateType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        GateType::ALL.into_iter().find(|g| g.name() == s).ok_or_else(|| format!("unknown gate type `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Drive {
    X0,
    X1,
    X2,
    X4,
    X8,
    X16,
}

impl Drive {
    pub const ALL: [Drive; 6] = [Drive::X0, Drive::X1, Drive::X2, Drive::X4, Drive::X8, Drive::X16];

    pub fn name(self) -> &'static str {
        match self {
            Drive::X0 => "x0",
            Drive::X1 => "x1",
            Drive::X2 => "x2",
            Drive::X4 => "x4",
            Drive::X8 => "x8",
            Drive::X16 => "x16",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Drive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Drive {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Drive::ALL.into_iter().find(|d| d.name() == s).ok_or_else(|| format!("unknown drive strength `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Layer {
    M1,
    M2,
    M3,
    M4,
    M5,
}

impl Layer {
    pub const ALL: [Layer; 5] = [Layer::M1, Layer::M2, Layer::M3, Layer::M4, Layer::M5];

    pub fn name(self) -> &'static str {
        match self {
            Layer::M1 => "M1",
            Layer::M2 => "M2",
            Layer::M3 => "M3",
            Layer::M4 => "M4",
            Layer::M5 => "M5",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Layer {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Layer::ALL.into_iter().find(|l| l.name() == s).ok_or_else(|| format!("unknown metal layer `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellLibrary {
    /// Pin-to-pin delay in ps, indexed [gate type][drive].
    pub base_delay: [[f64; 6]; 7],
    /// Input pin capacitance in arbitrary load units, indexed [gate type][drive].
    pub input_cap: [[f64; 6]; 7],
    pub clk_to_q: f64,
    pub setup: f64,
    /// ps per um, indexed by layer.
    pub wire_unit: [f64; 5],
    pub vdd: f64,
    pub vth0: f64,
}

const DRIVE_SCALE: [f64; 6] = [1.3, 1.0, 0.8, 0.65, 0.55, 0.5];

impl Default for CellLibrary {
    fn default() -> Self {
        // x1 delays under a fan-out-of-four load
        let x1 = [30.0, 42.0, 38.0, 46.0, 52.0, 56.0, 70.0];
        let cap_x1 = [1.0, 1.0, 1.2, 1.4, 1.2, 1.3, 2.0];
        let mut base_delay = [[0.0; 6]; 7];
        let mut input_cap = [[0.0; 6]; 7];
        for g in 0..7 {
            for d in 0..6 {
                base_delay[g][d] = x1[g] * DRIVE_SCALE[d];
                input_cap[g][d] = cap_x1[g] / DRIVE_SCALE[d];
            }
        }
        CellLibrary {
            base_delay,
            input_cap,
            clk_to_q: 45.0,
            setup: 25.0,
            wire_unit: [0.12, 0.08, 0.05, 0.04, 0.03],
            vdd: 0.85,
            vth0: 0.30,
        }
    }
}

impl CellLibrary {
    pub fn delay(&self, gate: GateType, drive: Drive) -> f64 {
        self.base_delay[gate.index()][drive.index()]
    }

    pub fn wire_delay(&self, layer: Layer, length_um: f64) -> f64 {
        self.wire_unit[layer.index()] * length_um
    }

    /// Checks the library invariants: positive delays, delay non-increasing
    /// with drive strength, and Vdd above Vth0.
    pub fn validate(&self) -> Result<(), String> {
        for g in GateType::ALL {
            for d in Drive::ALL {
                let v = self.delay(g, d);
                if !(v > 0.0 && v.is_finite()) {
                    return Err(format!("{g} {d}: delay must be positive, got {v}"));
                }
            }
            for w in self.base_delay[g.index()].windows(2) {
                if w[1] > w[0] {
                    return Err(format!("{g}: delay increases with drive strength"));
                }
            }
        }
        for (l, &u) in Layer::ALL.iter().zip(&self.wire_unit) {
            if !(u > 0.0 && u.is_finite()) {
                return Err(format!("{l}: wire unit delay must be positive, got {u}"));
            }
        }
        if !(self.clk_to_q > 0.0 && self.setup > 0.0) {
            return Err("flip-flop clk_to_q and setup must be positive".into());
        }
        if !(self.vdd > self.vth0 && self.vth0 > 0.0) {
            return Err(format!("need vdd > vth0 > 0, got vdd={} vth0={}", self.vdd, self.vth0));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_library_is_valid() {
        CellLibrary::default().validate().unwrap();
    }

    #[test]
    fn names_round_trip() {
        for g in GateType::ALL {
            assert_eq!(g.name().parse::<GateType>().unwrap(), g);
        }
        for d in Drive::ALL {
            assert_eq!(d.name().parse::<Drive>().unwrap(), d);
        }
        for l in Layer::ALL {
            assert_eq!(l.name().parse::<Layer>().unwrap(), l);
        }
        assert!("NAND3".parse::<GateType>().is_err());
    }

    #[test]
    fn increasing_delay_with_drive_is_rejected() {
        let mut lib = CellLibrary::default();
        lib.base_delay[GateType::Inv.index()][Drive::X8.index()] = 100.0;
        assert!(lib.validate().is_err());
    }
}
