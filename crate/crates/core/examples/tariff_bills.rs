//! Bills two households with the same annual energy, one flat and one with an evening
//! peak, under every preset tariff.

use tarifflab::tariff::{bill, build_schedule, TariffSpec};
use tarifflab::time::{TimeGrid, DEFAULT_YEAR};
use tarifflab::SystemDesign;

fn main() -> anyhow::Result<()> {
    let grid = TimeGrid::representative_days(DEFAULT_YEAR, 15, 28)?;
    let steps_per_day = (24.0 / grid.step_hours()) as usize;
    let flat = vec![0.6; grid.len()];
    let peaky: Vec<f64> = (0..grid.len())
        .map(|t| {
            let hour = (t % steps_per_day) as f64 * grid.step_hours();
            if (17.0..21.0).contains(&hour) { 2.4 } else { 0.2 }
        })
        .collect();
    // Utility-wide load for the dynamic tariff: a plain evening bump.
    let aggregate: Vec<f64> = peaky.iter().map(|l| 100.0 + 10.0 * l).collect();

    println!("{:<16} {:>10} {:>10} {:>10}", "tariff", "flat €", "peaky €", "capacity");
    for spec in TariffSpec::all_presets() {
        let schedule = build_schedule(&spec, &grid, Some(&aggregate))?;
        let a = bill(&schedule, &SystemDesign::grid_only(&flat))?;
        let b = bill(&schedule, &SystemDesign::grid_only(&peaky))?;
        println!(
            "{:<16} {:>10.2} {:>10.2} {:>10.2}",
            spec.name, a.total, b.total, b.capacity_charge
        );
    }
    println!("(28 representative days, {:.3} of a year)", grid.year_fraction());
    Ok(())
}
