use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{voltage_line_stats, VoltageLimits};
use super::model::Network;
use super::overload::{overload_events_in, OverloadCurve};
use super::sweep::{run_net_loads, SweepOptions};
use crate::design::SystemDesign;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HostingOptions {
    pub tolerance: f64,
    /// Largest PV scale factor probed.
    pub search_cap: f64,
    pub use_virtual_rating: bool,
    pub limits: VoltageLimits,
    pub curve: OverloadCurve,
    pub sweep: SweepOptions,
    pub step_minutes: f64,
    /// Segment boundaries of the time grid; empty means one contiguous series.
    pub segments: Vec<std::ops::Range<usize>>,
}

impl Default for HostingOptions {
    fn default() -> Self {
        HostingOptions {
            tolerance: 1e-3,
            search_cap: 100.0,
            use_virtual_rating: false,
            limits: VoltageLimits::default(),
            curve: OverloadCurve::default(),
            sweep: SweepOptions::default(),
            step_minutes: 15.0,
            segments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violations {
    pub transformer: usize,
    pub lines: usize,
    pub voltage: usize,
}

impl Violations {
    pub fn total(&self) -> usize {
        self.transformer + self.lines + self.voltage
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostingCapacity {
    /// Largest violation-free scale factor found.
    pub scale: f64,
    /// False when the search cap itself is violation-free.
    pub bounded: bool,
    /// Every probe as (scale, violation-free).
    pub probes: Vec<(f64, bool)>,
}

/// Counts all constraint violations when each building's PV output is multiplied by
/// `scale`; the building is modelled as load minus scaled PV, without battery.
pub fn violations_at(
    net: &Network,
    designs: &BTreeMap<String, SystemDesign>,
    scale: f64,
    opts: &HostingOptions,
) -> Result<Violations> {
    let loads: BTreeMap<String, Vec<f64>> = designs
        .iter()
        .map(|(id, d)| {
            (
                id.clone(),
                d.load.iter().zip(&d.pv_gen).map(|(l, g)| l - scale * g).collect(),
            )
        })
        .collect();
    let res = match run_net_loads(net, &loads, &opts.sweep) {
        Ok(r) => r,
        // Collapse or divergence means the scale is far beyond any limit.
        Err(Error::AtStep { .. }) => {
            return Ok(Violations {
                transformer: 0,
                lines: 0,
                voltage: usize::MAX / 4,
            })
        }
        Err(e) => return Err(e),
    };
    let segments = if opts.segments.is_empty() {
        vec![0..res.len()]
    } else {
        opts.segments.clone()
    };
    let rating = net.transformer.rating(opts.use_virtual_rating);
    let over = overload_events_in(&res.transformer_flow, &segments, rating, opts.step_minutes, &opts.curve);
    let stats = voltage_line_stats(&res, &opts.limits);
    Ok(Violations {
        transformer: over.violations,
        lines: stats.line_overloads(),
        voltage: stats.voltage_violations(),
    })
}

/// Largest uniform PV scale factor without violations, by doubling then bisection.
pub fn hosting_capacity(
    net: &Network,
    designs: &BTreeMap<String, SystemDesign>,
    opts: &HostingOptions,
) -> Result<HostingCapacity> {
    opts.curve.validate()?;
    let base = violations_at(net, designs, 0.0, opts)?;
    if base.total() > 0 {
        return Err(Error::DemandSideViolations(base.total()));
    }
    let mut probes = vec![(0.0, true)];
    let ok = |s: f64, probes: &mut Vec<(f64, bool)>| -> Result<bool> {
        let clean = violations_at(net, designs, s, opts)?.total() == 0;
        probes.push((s, clean));
        Ok(clean)
    };
    let mut lo = 0.0;
    let mut hi = 1.0f64.min(opts.search_cap);
    loop {
        if !ok(hi, &mut probes)? {
            break;
        }
        lo = hi;
        if hi >= opts.search_cap {
            return finish(lo, false, probes);
        }
        hi = (hi * 2.0).min(opts.search_cap);
    }
    while hi - lo > opts.tolerance {
        let mid = 0.5 * (lo + hi);
        if ok(mid, &mut probes)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    finish(lo, true, probes)
}

fn finish(scale: f64, bounded: bool, probes: Vec<(f64, bool)>) -> Result<HostingCapacity> {
    let worst_clean = probes.iter().filter(|p| p.1).map(|p| p.0).fold(f64::MIN, f64::max);
    let best_dirty = probes.iter().filter(|p| !p.1).map(|p| p.0).fold(f64::MAX, f64::min);
    if worst_clean > best_dirty {
        return Err(Error::Network(format!(
            "violations are not monotone in PV scale: clean at {worst_clean}, violating at {best_dirty}"
        )));
    }
    Ok(HostingCapacity { scale, bounded, probes })
}
