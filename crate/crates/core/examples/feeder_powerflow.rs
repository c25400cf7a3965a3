//! Runs a day of power flow on a synthetic urban feeder where every building has the
//! same rooftop PV, then searches the PV hosting capacity.

use std::collections::BTreeMap;

use tarifflab::network::{
    hosting_capacity, overload_events, run_timeseries, voltage_line_stats, HostingOptions, OverloadCurve,
    SweepOptions, VoltageLimits,
};
use tarifflab::synth::{synth_network, NetworkKind};
use tarifflab::time::{TimeGrid, DEFAULT_YEAR};
use tarifflab::SystemDesign;

fn main() -> anyhow::Result<()> {
    let kind = NetworkKind::Urban;
    let ids: Vec<String> = (0..kind.buildings()).map(|i| format!("h{i:03}")).collect();
    let net = synth_network(kind, 5, &ids)?;
    let grid = TimeGrid::from_blocks(DEFAULT_YEAR, 15, &[(171, 1)])?;
    let hours: Vec<f64> = (0..grid.len()).map(|t| t as f64 * grid.step_hours()).collect();

    let designs: BTreeMap<String, SystemDesign> = ids
        .iter()
        .map(|id| {
            let load: Vec<f64> = hours.iter().map(|h| if (18.0..22.0).contains(h) { 3.0 } else { 0.8 }).collect();
            let pv: Vec<f64> = hours
                .iter()
                .map(|h| 8.0 * (std::f64::consts::PI * (h - 6.0) / 14.0).sin().max(0.0))
                .collect();
            let mut d = SystemDesign::grid_only(&load);
            for t in 0..load.len() {
                let own = load[t].min(pv[t]);
                d.pv_to_load[t] = own;
                d.import[t] = load[t] - own;
                d.export[t] = pv[t] - own;
            }
            d.pv_gen = pv;
            d.pv_capacity = 8.0;
            (id.clone(), d)
        })
        .collect();

    let flow = run_timeseries(&net, &designs, &SweepOptions::default())?;
    let stats = voltage_line_stats(&flow, &VoltageLimits::default());
    let rating = net.transformer.rating(false);
    let overload = overload_events(&flow.transformer_flow, rating, 15.0, &OverloadCurve::default());
    let (lo, hi) = flow
        .bus_voltage
        .iter()
        .flatten()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    println!("{} buses, {} lines, transformer {rating} kVA", net.n_buses(), flow.line_ids.len());
    println!("voltage range {lo:.4}..{hi:.4} p.u., {} violations", stats.voltage_violations());
    println!("peak reverse flow {:.1} kW", -flow.transformer_flow.iter().cloned().fold(0.0, f64::min));
    println!("{} overload events, {:.2} h", overload.events.len(), overload.overload_hours);
    println!("largest conservation error {:.1e}", flow.conservation_error());

    let hc = hosting_capacity(&net, &designs, &HostingOptions::default())?;
    println!(
        "hosting capacity: PV scale {:.3} ({:.0} kWp per building) after {} probes",
        hc.scale,
        8.0 * hc.scale,
        hc.probes.len()
    );
    Ok(())
}
