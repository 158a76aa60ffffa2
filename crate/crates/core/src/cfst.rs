// SPDX-License-Identifier: Apache-2.0

//! Clock frequency sweep testing: each path's delay read off a period grid.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fabsim::ChipInstance;
use crate::sta::{TimingGraph, TimingPath};

#[derive(Debug, Error, PartialEq)]
pub enum CfstError {
    #[error("invalid tester configuration: {0}")]
    Config(String),
    #[error("chip has {chip} arcs but the design has {design}")]
    ArcCount { chip: usize, design: usize },
    #[error("measurement line {line}: {msg}")]
    Dump { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfstConfig {
    /// Highest tester frequency (GHz).
    pub f_max_ghz: f64,
    /// Period step (ps).
    pub step_ps: f64,
    /// First swept period (ps); the design period when unset.
    pub start_period_ps: Option<f64>,
}

impl Default for CfstConfig {
    fn default() -> Self {
        CfstConfig { f_max_ghz: 4.0, step_ps: 10.0, start_period_ps: None }
    }
}

impl CfstConfig {
    /// Shortest period the tester can apply (ps).
    pub fn min_period_ps(&self) -> f64 {
        1000.0 / self.f_max_ghz
    }

    pub fn check(&self, design_period: f64) -> Result<(), CfstError> {
        if !(self.step_ps > 0.0 && self.step_ps.is_finite()) {
            return Err(CfstError::Config(format!("step {} ps must be positive", self.step_ps)));
        }
        if !(self.f_max_ghz > 0.0 && self.f_max_ghz.is_finite()) {
            return Err(CfstError::Config(format!("f_max {} GHz must be positive", self.f_max_ghz)));
        }
        let start = self.start_period_ps.unwrap_or(design_period);
        if self.min_period_ps() > start {
            return Err(CfstError::Config(format!(
                "start period {start} ps is shorter than the tester limit {} ps",
                self.min_period_ps()
            )));
        }
        Ok(())
    }

    /// A path can be measured when the tester can clock it at its delay.
    pub fn measurable(&self, delay: f64) -> bool {
        delay >= self.min_period_ps()
    }
}

/// Smallest multiple of `step` that is at least `d`.
pub fn quantize(d: f64, step: f64) -> f64 {
    let mut k = (d / step).ceil();
    // division rounding can land one step off either way
    if k * step < d {
        k += 1.0;
    }
    while (k - 1.0) * step >= d {
        k -= 1.0;
    }
    k * step
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CfstMeasurement {
    pub step_ps: f64,
    pub f_max_ghz: f64,
    /// Start-to-fail period per path id (ps).
    pub measured: BTreeMap<usize, f64>,
    /// Paths faster than the tester can clock.
    pub unmeasurable: Vec<usize>,
}

pub fn cfst_measure(
    graph: &TimingGraph,
    chip: &ChipInstance,
    paths: &[TimingPath],
    cfg: &CfstConfig,
) -> Result<CfstMeasurement, CfstError> {
    cfg.check(graph.netlist.period)?;
    if chip.arc_delays.len() != graph.arcs.len() {
        return Err(CfstError::ArcCount { chip: chip.arc_delays.len(), design: graph.arcs.len() });
    }
    let mut out = CfstMeasurement { step_ps: cfg.step_ps, f_max_ghz: cfg.f_max_ghz, ..Default::default() };
    for p in paths {
        let d = graph.delay_with(p, &chip.arc_delays);
        if cfg.measurable(d) {
            out.measured.insert(p.id, quantize(d, cfg.step_ps));
        } else {
            out.unmeasurable.push(p.id);
        }
    }
    Ok(out)
}

impl CfstMeasurement {
    /// Renders the `.cfst` file.
    pub fn emit(&self) -> String {
        let mut s = format!("# step={} f_max={}\n", self.step_ps, self.f_max_ghz);
        for (id, v) in &self.measured {
            let _ = writeln!(s, "path {id} cfst={v}");
        }
        if !self.unmeasurable.is_empty() {
            s.push_str("# unmeasurable\n");
            for id in &self.unmeasurable {
                let _ = writeln!(s, "# path {id}");
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<CfstMeasurement, CfstError> {
        let mut m = CfstMeasurement::default();
        let mut in_excluded = false;
        let mut header = false;
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            let bad = |msg: String| CfstError::Dump { line: ln, msg };
            let t: Vec<&str> = line.split_whitespace().collect();
            match t.as_slice() {
                [] => {}
                ["#", step, fmax] if step.starts_with("step=") => {
                    m.step_ps = step[5..].parse().map_err(|_| bad(format!("bad step `{step}`")))?;
                    m.f_max_ghz = fmax
                        .strip_prefix("f_max=")
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad(format!("bad f_max `{fmax}`")))?;
                    header = true;
                }
                ["#", "unmeasurable"] => in_excluded = true,
                ["#", "path", id] if in_excluded => {
                    m.unmeasurable.push(id.parse().map_err(|_| bad(format!("bad path id `{id}`")))?)
                }
                ["path", id, v] => {
                    let id: usize = id.parse().map_err(|_| bad(format!("bad path id `{id}`")))?;
                    let v: f64 = v
                        .strip_prefix("cfst=")
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad(format!("bad measurement `{v}`")))?;
                    if m.measured.insert(id, v).is_some() {
                        return Err(bad(format!("path {id} measured twice")));
                    }
                }
                [c, ..] if c.starts_with('#') => {}
                _ => return Err(bad(format!("unrecognized line `{line}`"))),
            }
        }
        if !header {
            return Err(CfstError::Dump { line: 1, msg: "missing `# step= f_max=` header".into() });
        }
        Ok(m)
    }
}
