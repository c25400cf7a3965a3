//! Sizing and year-long dispatch of one building's PV and battery system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Battery physics. Efficiencies are one-way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryParams {
    pub charge_efficiency: f64,
    pub discharge_efficiency: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Maximum charge or discharge power per kWh of capacity (1/h).
    pub max_c_rate: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        BatteryParams {
            charge_efficiency: 0.96,
            discharge_efficiency: 0.96,
            soc_min: 0.0,
            soc_max: 1.0,
            max_c_rate: 1.0,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<()> {
        let eff = |e: f64| e > 0.0 && e <= 1.0;
        if !eff(self.charge_efficiency) || !eff(self.discharge_efficiency) {
            return Err(Error::InvalidInput("battery efficiencies must lie in (0, 1]".into()));
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(Error::InvalidInput("battery SOC bounds must satisfy 0 <= min < max <= 1".into()));
        }
        if !(self.max_c_rate > 0.0) {
            return Err(Error::InvalidInput("battery C-rate must be positive".into()));
        }
        Ok(())
    }
}

/// Capacities, dispatch and cost of one building's system. Powers in kW, SOC in kWh.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemDesign {
    pub pv_capacity: f64,
    pub battery_capacity: f64,
    pub import: Vec<f64>,
    pub export: Vec<f64>,
    pub pv_to_load: Vec<f64>,
    pub pv_to_batt: Vec<f64>,
    pub batt_to_load: Vec<f64>,
    /// State of charge at the start of each step.
    pub soc: Vec<f64>,
    pub load: Vec<f64>,
    pub pv_gen: Vec<f64>,
    /// Total cost of ownership over the horizon (annualized capex prorated + opex).
    pub tco: f64,
    /// False when the solver stopped before proving optimality.
    #[serde(default = "yes")]
    pub optimal: bool,
}

fn yes() -> bool {
    true
}

impl SystemDesign {
    /// Grid-only design: the whole load is imported.
    pub fn grid_only(load: &[f64]) -> Self {
        let n = load.len();
        SystemDesign {
            import: load.to_vec(),
            export: vec![0.0; n],
            pv_to_load: vec![0.0; n],
            pv_to_batt: vec![0.0; n],
            batt_to_load: vec![0.0; n],
            soc: vec![0.0; n],
            load: load.to_vec(),
            pv_gen: vec![0.0; n],
            optimal: true,
            ..Default::default()
        }
    }

    /// Design carrying only exchange series (for billing or power flow).
    pub fn from_exchange(import: Vec<f64>, export: Vec<f64>) -> Self {
        let n = import.len();
        let load = import.clone();
        SystemDesign {
            import,
            export,
            pv_to_load: vec![0.0; n],
            pv_to_batt: vec![0.0; n],
            batt_to_load: vec![0.0; n],
            soc: vec![0.0; n],
            load,
            pv_gen: vec![0.0; n],
            optimal: true,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.import.len()
    }

    pub fn is_empty(&self) -> bool {
        self.import.is_empty()
    }

    /// Net demand seen by the grid (positive = consumption).
    pub fn net_load(&self) -> Vec<f64> {
        self.import
            .iter()
            .zip(&self.export)
            .map(|(i, e)| i - e)
            .collect()
    }

    pub fn curtailment(&self, t: usize) -> f64 {
        self.pv_gen[t] - self.pv_to_load[t] - self.pv_to_batt[t] - self.export[t]
    }

    /// Checks every structural invariant at tolerance `tol` (kW / kWh).
    /// Returns a description of each violation found.
    pub fn check(&self, battery: &BatteryParams, step_hours: f64, tol: f64) -> Vec<String> {
        let n = self.len();
        let mut issues = Vec::new();
        let series: [(&str, &Vec<f64>); 8] = [
            ("import", &self.import),
            ("export", &self.export),
            ("pv_to_load", &self.pv_to_load),
            ("pv_to_batt", &self.pv_to_batt),
            ("batt_to_load", &self.batt_to_load),
            ("soc", &self.soc),
            ("load", &self.load),
            ("pv_gen", &self.pv_gen),
        ];
        for (name, s) in series {
            if s.len() != n {
                issues.push(format!("{name} has length {} (expected {n})", s.len()));
                return issues;
            }
            if let Some(t) = s.iter().position(|v| *v < -tol || !v.is_finite()) {
                issues.push(format!("{name}[{t}] = {} is negative", s[t]));
            }
        }
        let lo = battery.soc_min * self.battery_capacity - tol;
        let hi = battery.soc_max * self.battery_capacity + tol;
        for t in 0..n {
            let lb = self.import[t] + self.pv_to_load[t] + self.batt_to_load[t] - self.load[t];
            if lb.abs() > tol {
                issues.push(format!("load balance off by {lb:e} at step {t}"));
            }
            if self.curtailment(t) < -tol {
                issues.push(format!("PV balance negative curtailment at step {t}"));
            }
            if self.import[t].min(self.export[t]) > tol {
                issues.push(format!("simultaneous import and export at step {t}"));
            }
            if self.soc[t] < lo || self.soc[t] > hi {
                issues.push(format!("soc[{t}] = {} outside bounds", self.soc[t]));
            }
            let next = self.soc[(t + 1) % n];
            let expected = self.soc[t]
                + battery.charge_efficiency * self.pv_to_batt[t] * step_hours
                - self.batt_to_load[t] / battery.discharge_efficiency * step_hours;
            if (next - expected).abs() > tol {
                issues.push(format!("SOC recursion off by {:e} at step {t}", next - expected));
            }
            if issues.len() > 20 {
                break;
            }
        }
        issues
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_only_design_is_valid() {
        let d = SystemDesign::grid_only(&[1.0, 2.0, 0.5]);
        assert!(d.check(&BatteryParams::default(), 0.25, 1e-9).is_empty());
        assert_eq!(d.net_load(), vec![1.0, 2.0, 0.5]);
    }

    #[test]
    fn detects_broken_load_balance() {
        let mut d = SystemDesign::grid_only(&[1.0, 2.0]);
        d.import[1] = 1.0;
        let issues = d.check(&BatteryParams::default(), 1.0, 1e-9);
        assert!(issues.iter().any(|s| s.contains("load balance")));
    }

    #[test]
    fn default_battery_is_valid() {
        BatteryParams::default().validate().unwrap();
        let bad = BatteryParams {
            soc_min: 0.9,
            soc_max: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
