//! Generates a small synthetic scenario in a temporary directory (or the directory
//! given as the first argument), runs it end to end and prints the fleet summary.

use std::path::PathBuf;

use tarifflab::fixture::{write_fixture, FixtureOptions};
use tarifflab::scenario::{run_scenario, validate_config};
use tarifflab::synth::NetworkKind;

fn main() -> anyhow::Result<()> {
    let tmp;
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => {
            tmp = tempfile::tempdir()?;
            tmp.path().to_path_buf()
        }
    };
    let opts = FixtureOptions {
        networks: vec![(NetworkKind::Rural, 4)],
        days: Some(7),
        tariffs: Some(vec!["dynamic".into(), "ct-daily".into()]),
        ..Default::default()
    };
    let cfg = validate_config(&write_fixture(&dir, &opts)?).map_err(|e| anyhow::anyhow!(e.join("\n")))?;
    let report = run_scenario(&cfg)?;

    let r = &report.results;
    println!("{:<10} {:<14} {:>8} {:>9} {:>8} {:>8} {:>10}", "network", "tariff", "pv kW", "batt kWh", "SC", "SS", "revenue €");
    for c in &r.cells {
        let n = c.kpis.len() as f64;
        let pv: f64 = c.kpis.iter().map(|k| k.pv_capacity).sum();
        let batt: f64 = c.kpis.iter().map(|k| k.battery_capacity).sum();
        let sc = c.kpis.iter().map(|k| k.self_consumption).sum::<f64>() / n;
        let ss = c.kpis.iter().map(|k| k.self_sufficiency).sum::<f64>() / n;
        println!(
            "{:<10} {:<14} {:>8.1} {:>9.1} {:>8.3} {:>8.3} {:>10.1}",
            c.network, c.tariff, pv, batt, sc, ss, c.utility_revenue
        );
    }
    for s in &report.stages {
        println!("stage {:<32} {}", s.stage, if s.cached { "cached" } else { "computed" });
    }
    if !report.invariant_failures.is_empty() {
        println!("invariant failures: {:?}", report.invariant_failures);
    }
    println!("report written to {}", cfg.out.display());
    Ok(())
}
