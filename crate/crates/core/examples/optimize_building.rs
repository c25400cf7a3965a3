//! Sizes PV and battery for one synthetic house under each preset tariff and checks
//! that the program's objective equals bill plus annualized capex.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tarifflab::demand::{synth_shape, BuildingCategory};
use tarifflab::optimizer::{formulate_program, solve_design_report, BuildingInput, CostModel, SolverOptions};
use tarifflab::pv::{pv_profile, PvParams, RoofSegment};
use tarifflab::synth::{synth_weather, DEFAULT_LATITUDE, DEFAULT_LONGITUDE};
use tarifflab::tariff::{bill, build_schedule, TariffSpec};
use tarifflab::time::{TimeGrid, DEFAULT_YEAR};
use tarifflab::BatteryParams;

fn main() -> anyhow::Result<()> {
    let days: u32 = std::env::args().nth(1).map_or(Ok(28), |s| s.parse())?;
    let grid = TimeGrid::representative_days(DEFAULT_YEAR, 15, days)?;
    let weather = synth_weather(11, &grid, DEFAULT_LATITUDE, DEFAULT_LONGITUDE);
    let roof = [RoofSegment::new(40.0, 0.0, 35.0), RoofSegment::new(40.0, 180.0, 35.0)];
    let pv = pv_profile(&weather, &grid, &roof, &PvParams::default())?;

    // 5 MWh per year, spread over the grid with a synthetic house shape.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shape = synth_shape(&mut rng, BuildingCategory::House, &grid);
    let energy = 5000.0 * grid.year_fraction();
    let load: Vec<f64> = shape.iter().map(|s| s * energy / grid.step_hours()).collect();
    let aggregate: Vec<f64> = load.iter().map(|l| l + 1.0).collect();

    let building = BuildingInput { id: "house".into(), load, pv };
    let costs = CostModel::default();
    let battery = BatteryParams::default();
    println!("{} steps, roof potential {:.1} kWp", grid.len(), building.pv.max_capacity);
    println!("{:<16} {:>8} {:>9} {:>10} {:>12}  {:>6}", "tariff", "pv kW", "batt kWh", "TCO", "bill+capex", "secs");
    for spec in TariffSpec::all_presets() {
        let started = Instant::now();
        let schedule = build_schedule(&spec, &grid, Some(&aggregate))?;
        let program = formulate_program(&building, &schedule, &costs, &battery)?;
        let (design, report) = solve_design_report(&program, &SolverOptions::default())?;
        let billed = bill(&schedule, &design)?.total
            + costs.annualized_capex(design.pv_capacity, design.battery_capacity) * grid.year_fraction();
        println!(
            "{:<16} {:>8.2} {:>9.2} {:>10.2} {:>12.2}  {:>6.2}  gap {:.1e}",
            spec.name,
            design.pv_capacity,
            design.battery_capacity,
            report.objective,
            billed,
            started.elapsed().as_secs_f64(),
            report.duality_gap
        );
    }
    Ok(())
}
