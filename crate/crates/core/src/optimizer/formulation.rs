//! Total-cost-of-ownership program of one building under one tariff schedule.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::costs::CostModel;
use super::program::MathProgram;
use crate::design::BatteryParams;
use crate::error::{Error, Result};
use crate::pv::PvProfile;
use crate::tariff::TariffSchedule;

/// Demand and PV potential of one building on the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingInput {
    pub id: String,
    /// kW per step
    pub load: Vec<f64>,
    pub pv: PvProfile,
}

/// Column indices of the design program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub steps: usize,
    pub import: usize,
    pub export: usize,
    pub pv_to_load: usize,
    pub pv_to_batt: usize,
    pub batt_to_load: usize,
    pub soc: usize,
    pub curtail: usize,
    pub pv_capacity: usize,
    pub battery_capacity: usize,
    pub pv_installed: usize,
    pub battery_installed: Option<usize>,
    /// One epigraph column per charged billing period.
    pub peaks: Vec<usize>,
}

impl Layout {
    pub fn range(&self, first: usize) -> Range<usize> {
        first..first + self.steps
    }
}

/// A formulated building program plus what is needed to read a design back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignProgram {
    pub program: MathProgram,
    pub layout: Layout,
    pub load: Vec<f64>,
    pub pv_per_kw: Vec<f64>,
    pub max_pv_capacity: f64,
    pub battery: BatteryParams,
    pub step_hours: f64,
    /// Share of the year covered; capex is prorated by it.
    pub year_fraction: f64,
}

pub fn formulate_program(
    building: &BuildingInput,
    schedule: &TariffSchedule,
    costs: &CostModel,
    battery: &BatteryParams,
) -> Result<DesignProgram> {
    costs.validate()?;
    battery.validate()?;
    let n = schedule.len();
    for (what, len) in [("load", building.load.len()), ("pv profile", building.pv.per_kw.len())] {
        if len != n {
            return Err(Error::LengthMismatch {
                what,
                expected: n,
                actual: len,
            });
        }
    }
    if let Some(index) = building.load.iter().position(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::NegativeValue {
            what: "load",
            index,
            value: building.load[index],
        });
    }
    let ts = schedule.timestep_hours;
    let frac = schedule.year_fraction;
    let inf = f64::INFINITY;
    let mut p = MathProgram {
        objective_offset: schedule.fixed_fees(),
        ..Default::default()
    };

    let block = |p: &mut MathProgram, name: &str, cost: &dyn Fn(usize) -> f64| -> usize {
        let first = p.n_columns();
        for t in 0..n {
            p.add_column(format!("{name}_{t}"), cost(t), 0.0, inf);
        }
        first
    };
    let import = block(&mut p, "imp", &|t| schedule.total_price(t) * ts);
    let export = block(&mut p, "exp", &|_| -schedule.export_price * ts);
    let pv_to_load = block(&mut p, "pvl", &|_| 0.0);
    let pv_to_batt = block(&mut p, "pvb", &|_| 0.0);
    let batt_to_load = block(&mut p, "bl", &|_| 0.0);
    let soc = block(&mut p, "soc", &|_| 0.0);
    let curtail = block(&mut p, "curt", &|_| 0.0);

    let pv_capacity = p.add_column("pv_cap", costs.pv_per_kw() * frac, 0.0, inf);
    let battery_capacity = p.add_column("bat_cap", costs.battery_per_kwh() * frac, 0.0, inf);
    let pv_installed = p.add_binary("pv_on", costs.pv_fixed_per_year() * frac);
    let battery_installed = (costs.battery_fixed_cost > 0.0)
        .then(|| p.add_binary("bat_on", costs.battery_fixed_per_year() * frac));

    let peaks: Vec<usize> = schedule
        .capacity_periods
        .iter()
        .map(|k| p.add_column(format!("pmax_{}", k.id), k.effective_rate(), 0.0, inf))
        .collect();

    let eta_c = battery.charge_efficiency;
    let eta_d = battery.discharge_efficiency;
    for t in 0..n {
        p.add_row(
            format!("load_{t}"),
            building.load[t],
            building.load[t],
            vec![(import + t, 1.0), (pv_to_load + t, 1.0), (batt_to_load + t, 1.0)],
        );
        p.add_row(
            format!("pv_{t}"),
            0.0,
            0.0,
            vec![
                (pv_to_load + t, 1.0),
                (pv_to_batt + t, 1.0),
                (export + t, 1.0),
                (curtail + t, 1.0),
                (pv_capacity, -building.pv.per_kw[t]),
            ],
        );
        let next = (t + 1) % n;
        let soc_terms = if next == t {
            vec![(pv_to_batt + t, -eta_c * ts), (batt_to_load + t, ts / eta_d)]
        } else {
            vec![
                (soc + next, 1.0),
                (soc + t, -1.0),
                (pv_to_batt + t, -eta_c * ts),
                (batt_to_load + t, ts / eta_d),
            ]
        };
        p.add_row(format!("soc_{t}"), 0.0, 0.0, soc_terms);
        p.add_row(
            format!("socmax_{t}"),
            -inf,
            0.0,
            vec![(soc + t, 1.0), (battery_capacity, -battery.soc_max)],
        );
        if battery.soc_min > 0.0 {
            p.add_row(
                format!("socmin_{t}"),
                0.0,
                inf,
                vec![(soc + t, 1.0), (battery_capacity, -battery.soc_min)],
            );
        }
        p.add_row(
            format!("chg_{t}"),
            -inf,
            0.0,
            vec![(pv_to_batt + t, 1.0), (battery_capacity, -battery.max_c_rate)],
        );
        p.add_row(
            format!("dis_{t}"),
            -inf,
            0.0,
            vec![(batt_to_load + t, 1.0), (battery_capacity, -battery.max_c_rate)],
        );
    }
    for (k, period) in schedule.capacity_periods.iter().enumerate() {
        for &t in &period.steps {
            p.add_row(
                format!("peak_{}_{t}", period.id),
                -inf,
                0.0,
                vec![(import + t, 1.0), (peaks[k], -1.0)],
            );
        }
    }
    p.add_row(
        "pv_gate",
        -inf,
        0.0,
        vec![(pv_capacity, 1.0), (pv_installed, -building.pv.max_capacity)],
    );
    if let Some(b) = battery_installed {
        // The gate needs a finite size bound: no battery can usefully store more than the
        // horizon's total demand.
        let total_demand: f64 = building.load.iter().sum::<f64>() * ts;
        let bound = (total_demand / battery.soc_max.max(1e-9)).max(1.0);
        p.add_row("bat_gate", -inf, 0.0, vec![(battery_capacity, 1.0), (b, -bound)]);
    }

    Ok(DesignProgram {
        program: p,
        layout: Layout {
            steps: n,
            import,
            export,
            pv_to_load,
            pv_to_batt,
            batt_to_load,
            soc,
            curtail,
            pv_capacity,
            battery_capacity,
            pv_installed,
            battery_installed,
            peaks,
        },
        load: building.load.clone(),
        pv_per_kw: building.pv.per_kw.clone(),
        max_pv_capacity: building.pv.max_capacity,
        battery: *battery,
        step_hours: ts,
        year_fraction: frac,
    })
}
