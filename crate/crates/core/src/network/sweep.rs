use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Network, S_BASE_KVA};
use crate::design::SystemDesign;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    /// Largest change of any bus voltage between iterations at convergence, p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Iterates below this magnitude are reported as voltage collapse, p.u.
    pub collapse_below: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            tolerance: 1e-10,
            max_iterations: 200,
            collapse_below: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub voltages: Vec<Complex64>,
    /// Line current magnitude, A.
    pub line_current: Vec<f64>,
    /// Power drawn from the slack, kW and kvar; positive means import from upstream.
    pub slack_power: Complex64,
    pub losses_kw: f64,
    pub iterations: usize,
}

/// Backward/forward sweep with constant-power loads. `p` and `q` are per-bus
/// consumption in kW/kvar (negative for net generation), in the network's bus order.
pub fn sweep(net: &Network, p: &[f64], q: &[f64], opts: &SweepOptions) -> Result<Snapshot> {
    let n = net.n_buses();
    if p.len() != n || q.len() != n {
        return Err(Error::LengthMismatch {
            what: "bus injections",
            expected: n,
            actual: p.len().min(q.len()),
        });
    }
    let s: Vec<Complex64> = p
        .iter()
        .zip(q)
        .map(|(p, q)| Complex64::new(p / S_BASE_KVA, q / S_BASE_KVA))
        .collect();
    let parent = net.parents();
    let mut v = vec![Complex64::new(1.0, 0.0); n];
    let mut branch = vec![Complex64::new(0.0, 0.0); n];

    let backward = |v: &[Complex64], branch: &mut [Complex64]| {
        for i in 0..n {
            branch[i] = (s[i] / v[i]).conj();
        }
        for i in (1..n).rev() {
            let (pi, _) = parent[i].expect("non-slack bus has a parent");
            let j = branch[i];
            branch[pi] += j;
        }
    };

    let mut iterations = 0;
    loop {
        iterations += 1;
        backward(&v, &mut branch);
        let mut diff: f64 = 0.0;
        let mut next = v.clone();
        for i in 1..n {
            let (pi, li) = parent[i].expect("non-slack bus has a parent");
            let (r, x) = net.line_impedance_pu(li);
            next[i] = next[pi] - Complex64::new(r, x) * branch[i];
            let mag = next[i].norm();
            if !(mag >= opts.collapse_below) {
                return Err(Error::VoltageCollapse {
                    bus: net.buses[i].id.clone(),
                    magnitude: mag,
                });
            }
            diff = diff.max((next[i] - v[i]).norm());
        }
        v = next;
        if diff < opts.tolerance {
            break;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                mismatch: diff,
            });
        }
    }
    backward(&v, &mut branch);

    let mut line_current = vec![0.0; net.lines.len()];
    let mut losses = 0.0;
    for i in 1..n {
        let (_, li) = parent[i].expect("non-slack bus has a parent");
        let mag = branch[i].norm();
        line_current[li] = mag * net.line_base_current(li);
        losses += net.line_impedance_pu(li).0 * mag * mag;
    }
    let slack_power = v[0] * branch[0].conj() * S_BASE_KVA;
    Ok(Snapshot {
        voltages: v,
        line_current,
        slack_power,
        losses_kw: losses * S_BASE_KVA,
        iterations,
    })
}

/// Snapshot with injections keyed by bus id; absent buses carry no load.
pub fn sweep_snapshot(
    net: &Network,
    p_injection: &BTreeMap<String, f64>,
    q_injection: &BTreeMap<String, f64>,
    opts: &SweepOptions,
) -> Result<Snapshot> {
    let p = per_bus(net, p_injection)?;
    let q = per_bus(net, q_injection)?;
    sweep(net, &p, &q, opts)
}

fn per_bus(net: &Network, map: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    let mut out = vec![0.0; net.n_buses()];
    for (bus, val) in map {
        let i = net
            .bus_index(bus)
            .ok_or_else(|| Error::Network(format!("unknown bus {bus}")))?;
        out[i] += val;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowResult {
    pub bus_ids: Vec<String>,
    pub line_ids: Vec<String>,
    /// `[bus][t]`, p.u. magnitude
    pub bus_voltage: Vec<Vec<f64>>,
    /// `[line][t]`, current over ampacity
    pub line_loading: Vec<Vec<f64>>,
    /// kW drawn from the upstream grid; negative values are reverse flow.
    pub transformer_flow: Vec<f64>,
    pub losses: Vec<f64>,
    /// Sum of all building injections (consumption positive), kW.
    pub total_injection: Vec<f64>,
}

impl PowerFlowResult {
    pub fn len(&self) -> usize {
        self.transformer_flow.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transformer_flow.is_empty()
    }

    /// Largest `|slack − Σ injections − losses|` relative to the larger of the flows.
    pub fn conservation_error(&self) -> f64 {
        (0..self.len())
            .map(|t| {
                let lhs = self.transformer_flow[t];
                let rhs = self.total_injection[t] + self.losses[t];
                (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-9)
            })
            .fold(0.0, f64::max)
    }
}

/// Net building load (import − export) per building, kW.
pub fn net_loads(designs: &BTreeMap<String, SystemDesign>) -> BTreeMap<String, Vec<f64>> {
    designs
        .iter()
        .map(|(id, d)| (id.clone(), d.import.iter().zip(&d.export).map(|(i, e)| i - e).collect()))
        .collect()
}

pub fn run_timeseries(
    net: &Network,
    designs: &BTreeMap<String, SystemDesign>,
    opts: &SweepOptions,
) -> Result<PowerFlowResult> {
    run_net_loads(net, &net_loads(designs), opts)
}

/// Time-series flow for per-building net loads at unity power factor. Steps are
/// solved independently and assembled in order.
pub fn run_net_loads(
    net: &Network,
    loads: &BTreeMap<String, Vec<f64>>,
    opts: &SweepOptions,
) -> Result<PowerFlowResult> {
    let mut n_steps = None;
    let mut mapped = Vec::with_capacity(loads.len());
    for (building, series) in loads {
        let bus = net
            .injections
            .get(building)
            .and_then(|b| net.bus_index(b))
            .ok_or_else(|| Error::Network(format!("building {building} has no injection point")))?;
        match n_steps {
            None => n_steps = Some(series.len()),
            Some(len) if len != series.len() => {
                return Err(Error::LengthMismatch {
                    what: "building net load",
                    expected: len,
                    actual: series.len(),
                })
            }
            _ => {}
        }
        mapped.push((bus, series));
    }
    let n_steps = n_steps.unwrap_or(0);
    let q = vec![0.0; net.n_buses()];
    let snaps: Vec<(Snapshot, f64)> = (0..n_steps)
        .into_par_iter()
        .map(|t| {
            let mut p = vec![0.0; net.n_buses()];
            let mut total = 0.0;
            for (bus, series) in &mapped {
                p[*bus] += series[t];
                total += series[t];
            }
            sweep(net, &p, &q, opts)
                .map(|s| (s, total))
                .map_err(|e| Error::AtStep {
                    step: t,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;

    let mut res = PowerFlowResult {
        bus_ids: net.buses.iter().map(|b| b.id.clone()).collect(),
        line_ids: net.lines.iter().map(|l| l.id.clone()).collect(),
        bus_voltage: vec![Vec::with_capacity(n_steps); net.n_buses()],
        line_loading: vec![Vec::with_capacity(n_steps); net.lines.len()],
        transformer_flow: Vec::with_capacity(n_steps),
        losses: Vec::with_capacity(n_steps),
        total_injection: Vec::with_capacity(n_steps),
    };
    for (snap, total) in snaps {
        for (b, v) in snap.voltages.iter().enumerate() {
            res.bus_voltage[b].push(v.norm());
        }
        for (l, i) in snap.line_current.iter().enumerate() {
            res.line_loading[l].push(i / net.ampacity(l));
        }
        res.transformer_flow.push(snap.slack_power.re);
        res.losses.push(snap.losses_kw);
        res.total_injection.push(total);
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Network;

    fn feeder(r: f64, x: f64) -> Network {
        Network::parse(&format!(
            r#"
[transformer]
s_rated = 400
lv_bus = "b0"
[[buses]]
id = "b0"
v_nominal = 400
[[buses]]
id = "b1"
v_nominal = 400
[[buses]]
id = "b2"
v_nominal = 400
[[lines]]
id = "a"
from = "b0"
to = "b1"
r = {r}
x = {x}
ampacity = 150
[[lines]]
id = "b"
from = "b1"
to = "b2"
r = {r}
x = {x}
ampacity = 150
[injections]
h1 = "b1"
h2 = "b2"
"#
        ))
        .unwrap()
    }

    #[test]
    fn zero_injection_is_flat() {
        let net = feeder(0.05, 0.02);
        let s = sweep(&net, &[0.0; 3], &[0.0; 3], &SweepOptions::default()).unwrap();
        assert!(s.voltages.iter().all(|v| *v == Complex64::new(1.0, 0.0)));
        assert_eq!(s.slack_power, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn zero_impedance_is_flat() {
        let net = feeder(0.0, 0.0);
        let s = sweep(&net, &[0.0, 30.0, -12.0], &[0.0; 3], &SweepOptions::default()).unwrap();
        assert!(s.voltages.iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
        assert!((s.slack_power.re - 18.0).abs() < 1e-9);
    }

    #[test]
    fn conservation_and_locality() {
        let net = feeder(0.08, 0.03);
        let loads = BTreeMap::from([
            ("h1".to_string(), vec![0.0, 20.0, 0.0]),
            ("h2".to_string(), vec![0.0, -35.0, 0.0]),
        ]);
        let r = run_net_loads(&net, &loads, &SweepOptions::default()).unwrap();
        assert!(r.conservation_error() < 1e-9);
        assert!(r.losses.iter().all(|l| *l >= 0.0));
        assert!(r.bus_voltage.iter().all(|v| v[0] == 1.0 && v[2] == 1.0));
        assert!(r.bus_voltage[2][1] > 1.0);
    }

    #[test]
    fn collapse_reported() {
        let net = feeder(0.5, 0.2);
        let err = sweep(&net, &[0.0, 0.0, 900.0], &[0.0; 3], &SweepOptions::default()).unwrap_err();
        assert!(matches!(err, Error::VoltageCollapse { .. } | Error::NonConvergence { .. }));
    }
}
