// SPDX-License-Identifier: Apache-2.0

//! Aging detection for fabricated chips through clock-frequency sweep
//! testing: synthetic netlists, static timing, aging physics, chip
//! fabrication, CFST measurement and the detector itself.

pub mod aging;
pub mod campaign;
pub mod cfst;
pub mod detector;
pub mod fabsim;
pub mod library;
pub mod netlist;
mod seeds;
pub mod sta;

pub use library::{CellLibrary, Drive, GateType, Layer};
