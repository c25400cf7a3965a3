use serde::{Deserialize, Serialize};

use super::costs::CostModel;
use super::formulation::{formulate_program, BuildingInput, DesignProgram};
use super::program::{LpSolution, SolverOptions};
use crate::design::{BatteryParams, SystemDesign};
use crate::error::{Error, Result};
use crate::tariff::TariffSchedule;

/// Values below this magnitude are treated as solver noise and snapped to zero.
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub objective: f64,
    pub duality_gap: f64,
    pub optimal: bool,
    /// Chosen value of every binary column, by name.
    pub binaries: Vec<(String, f64)>,
    pub lp_solves: usize,
}

/// Cost-optimal sizes and dispatch. Binary columns are resolved exactly by solving
/// every fixed-binary LP and keeping the cheapest.
pub fn solve_design(program: &DesignProgram, options: &SolverOptions) -> Result<SystemDesign> {
    solve_design_report(program, options).map(|(d, _)| d)
}

pub fn solve_design_report(
    program: &DesignProgram,
    options: &SolverOptions,
) -> Result<(SystemDesign, SolveReport)> {
    let binaries = program.program.binaries();
    let mut best: Option<(LpSolution, Vec<(usize, f64)>)> = None;
    let mut solves = 0;
    for mask in 0..(1u32 << binaries.len()) {
        let fixed: Vec<(usize, f64)> = binaries
            .iter()
            .enumerate()
            .map(|(i, &j)| (j, ((mask >> i) & 1) as f64))
            .collect();
        let pv_on = fixed
            .iter()
            .any(|&(j, v)| j == program.layout.pv_installed && v == 1.0);
        if pv_on && program.max_pv_capacity <= 0.0 {
            continue;
        }
        let sol = program.program.solve_lp(&fixed, options)?;
        solves += 1;
        let better = match &best {
            None => true,
            Some((b, _)) => sol.objective < b.objective,
        };
        if better {
            best = Some((sol, fixed));
        }
    }
    let (sol, fixed) = best.ok_or_else(|| Error::Solver("no binary assignment solved".into()))?;
    let design = extract(program, sol.values.clone(), sol.optimal);
    let report = SolveReport {
        objective: design.tco,
        duality_gap: sol.duality_gap,
        optimal: sol.optimal,
        binaries: fixed
            .iter()
            .map(|&(j, v)| (program.program.columns[j].name.clone(), v))
            .collect(),
        lp_solves: solves,
    };
    Ok((design, report))
}

/// Optimal dispatch for given sizes. The TCO includes the annualized capex of the sizes.
#[allow(clippy::too_many_arguments)]
pub fn dispatch_fixed(
    building: &BuildingInput,
    schedule: &TariffSchedule,
    costs: &CostModel,
    battery: &BatteryParams,
    pv_capacity: f64,
    battery_capacity: f64,
    options: &SolverOptions,
) -> Result<SystemDesign> {
    if !(pv_capacity >= 0.0 && battery_capacity >= 0.0) {
        return Err(Error::InvalidInput("capacities must be non-negative".into()));
    }
    if pv_capacity > building.pv.max_capacity * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "PV capacity {pv_capacity} kW exceeds the roof potential of {} kW",
            building.pv.max_capacity
        )));
    }
    let mut program = formulate_program(building, schedule, costs, battery)?;
    let l = program.layout.clone();
    let cols = &mut program.program.columns;
    for (j, v) in [(l.pv_capacity, pv_capacity), (l.battery_capacity, battery_capacity)] {
        cols[j].lower = v;
        cols[j].upper = v;
    }
    let mut fixed = vec![(l.pv_installed, if pv_capacity > 0.0 { 1.0 } else { 0.0 })];
    if let Some(b) = l.battery_installed {
        fixed.push((b, if battery_capacity > 0.0 { 1.0 } else { 0.0 }));
    }
    let sol = program.program.solve_lp(&fixed, options)?;
    let mut design = extract(&program, sol.values, sol.optimal);
    design.pv_capacity = pv_capacity;
    design.battery_capacity = battery_capacity;
    Ok(design)
}

fn extract(program: &DesignProgram, mut x: Vec<f64>, optimal: bool) -> SystemDesign {
    let l = &program.layout;
    for v in x.iter_mut() {
        if v.abs() < SNAP {
            *v = 0.0;
        }
    }
    let costs = &program.program.columns;
    // Simultaneous import and export only survives as solver noise; netting it never
    // raises cost while import is priced above export.
    for t in 0..l.steps {
        let (i, e, pl) = (l.import + t, l.export + t, l.pv_to_load + t);
        let m = x[i].min(x[e]);
        if m > 0.0 && costs[i].cost + costs[e].cost >= 0.0 {
            x[i] -= m;
            x[e] -= m;
            x[pl] += m;
        }
    }
    let series = |first: usize| x[l.range(first)].to_vec();
    let pv_capacity = x[l.pv_capacity];
    let pv_gen = program.pv_per_kw.iter().map(|p| p * pv_capacity).collect();
    SystemDesign {
        pv_capacity,
        battery_capacity: x[l.battery_capacity],
        import: series(l.import),
        export: series(l.export),
        pv_to_load: series(l.pv_to_load),
        pv_to_batt: series(l.pv_to_batt),
        batt_to_load: series(l.batt_to_load),
        soc: series(l.soc),
        load: program.load.clone(),
        pv_gen,
        tco: program.program.objective(&x),
        optimal,
    }
}
