//! Per-building indicators: self-consumption, self-sufficiency, energy exchange, bills
//! and peak imports.

use serde::{Deserialize, Serialize};

use crate::design::SystemDesign;
use crate::error::Result;
use crate::tariff::{bill, TariffSchedule};
use crate::time::{billing_periods, BillingHorizon, TimeGrid};

/// Snaps rounding noise at the ends of [0, 1]; a genuinely inconsistent dispatch stays
/// outside the interval.
fn unit(r: f64) -> f64 {
    if r > 1.0 && r <= 1.0 + 1e-9 {
        1.0
    } else if r < 0.0 && r >= -1e-9 {
        0.0
    } else {
        r
    }
}

/// Self-consumption and self-sufficiency; each is 0 when its denominator is 0.
pub fn sc_ss(design: &SystemDesign) -> (f64, f64) {
    let pv: f64 = design.pv_gen.iter().sum();
    let load: f64 = design.load.iter().sum();
    let used: f64 = design.pv_to_load.iter().zip(&design.pv_to_batt).map(|(a, b)| a + b).sum();
    let covered: f64 = design.pv_to_load.iter().zip(&design.batt_to_load).map(|(a, b)| a + b).sum();
    let sc = if pv > 0.0 { unit(used / pv) } else { 0.0 };
    let ss = if load > 0.0 { unit(covered / load) } else { 0.0 };
    (sc, ss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakStats {
    /// (period id, peak import kW)
    pub periods: Vec<(String, f64)>,
    pub aggregate: f64,
}

pub fn peak_stats(design: &SystemDesign, grid: &TimeGrid, horizon: BillingHorizon) -> PeakStats {
    let periods: Vec<(String, f64)> = billing_periods(grid, horizon)
        .into_iter()
        .map(|p| {
            let peak = p.steps.iter().map(|&t| design.import[t]).fold(0.0, f64::max);
            (p.id, peak)
        })
        .collect();
    let aggregate = design.import.iter().copied().fold(0.0, f64::max);
    PeakStats { periods, aggregate }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingKpi {
    pub building_id: String,
    pub pv_capacity: f64,
    pub battery_capacity: f64,
    pub self_consumption: f64,
    pub self_sufficiency: f64,
    /// kWh per year; grids shorter than a year are scaled up by their year fraction.
    pub annual_import: f64,
    pub annual_export: f64,
    pub net_producer: bool,
    /// Currency per year, scaled like the energies.
    pub annual_bill: f64,
    pub peak_import_by_period: Vec<f64>,
}

pub fn building_kpi(
    building_id: &str,
    design: &SystemDesign,
    schedule: &TariffSchedule,
    grid: &TimeGrid,
) -> Result<BuildingKpi> {
    let (sc, ss) = sc_ss(design);
    let scale = grid.step_hours() / grid.year_fraction();
    let annual_import = design.import.iter().sum::<f64>() * scale;
    let annual_export = design.export.iter().sum::<f64>() * scale;
    let b = bill(schedule, design)?;
    Ok(BuildingKpi {
        building_id: building_id.to_string(),
        pv_capacity: design.pv_capacity,
        battery_capacity: design.battery_capacity,
        self_consumption: sc,
        self_sufficiency: ss,
        annual_import,
        annual_export,
        net_producer: annual_export > annual_import,
        annual_bill: b.total / grid.year_fraction(),
        peak_import_by_period: peak_stats(design, grid, BillingHorizon::Monthly)
            .periods
            .into_iter()
            .map(|(_, p)| p)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::DEFAULT_YEAR;

    #[test]
    fn no_pv() {
        let d = SystemDesign::grid_only(&[1.0, 2.0]);
        assert_eq!(sc_ss(&d), (0.0, 0.0));
        let empty = SystemDesign::grid_only(&[0.0, 0.0]);
        assert_eq!(sc_ss(&empty), (0.0, 0.0));
    }

    #[test]
    fn all_generation_used() {
        let mut d = SystemDesign::grid_only(&[2.0, 3.0]);
        d.pv_gen = vec![1.0, 2.0];
        d.pv_to_load = vec![1.0, 2.0];
        d.import = vec![1.0, 1.0];
        let (sc, ss) = sc_ss(&d);
        assert_eq!(sc, 1.0);
        assert!((ss - 0.6).abs() < 1e-15);
    }

    #[test]
    fn peaks() {
        let g = TimeGrid::from_blocks(DEFAULT_YEAR, 60, &[(0, 1), (40, 1)]).unwrap();
        let mut d = SystemDesign::grid_only(&vec![3.0; 48]);
        assert!(peak_stats(&d, &g, BillingHorizon::Monthly).periods.iter().all(|p| p.1 == 3.0));
        d.import[30] = 7.0;
        let s = peak_stats(&d, &g, BillingHorizon::Monthly);
        assert_eq!(s.periods, vec![("2025-01".into(), 3.0), ("2025-02".into(), 7.0)]);
        assert_eq!(s.aggregate, 7.0);
        d.import = vec![0.0; 48];
        assert_eq!(peak_stats(&d, &g, BillingHorizon::Daily).aggregate, 0.0);
    }
}
