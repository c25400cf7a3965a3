//! Report tables and plot-ready data for a set of scenario results.
//!
//! Every float is written with six significant digits and rows are emitted in a fixed
//! order, so identical results give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kpi::BuildingKpi;
use crate::network::{GridStats, HostingCapacity, OverloadCurve, OverloadReport};
use crate::stats::rank_sum_test;
use crate::tariff::{BillBreakdown, TariffSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerflowSummary {
    pub rating_kva: f64,
    pub overload: OverloadReport,
    pub stats: GridStats,
    pub peak_import: f64,
    pub peak_export: f64,
    pub conservation_error: f64,
    /// Smallest per-step loss, kW.
    #[serde(default)]
    pub min_loss_kw: f64,
}

/// Outcome of one tariff on one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub network: String,
    pub tariff: String,
    pub kpis: Vec<BuildingKpi>,
    pub bills: Vec<(String, BillBreakdown)>,
    /// Annualized TCO per building.
    pub annual_cost: Vec<f64>,
    /// Utility revenue over the grid (imports without tax plus capacity charges minus
    /// export credit).
    pub utility_revenue: f64,
    pub reference_revenue: f64,
    pub grid_portion: f64,
    pub powerflow: Option<PowerflowSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub network: String,
    pub tariff: String,
    pub scale: f64,
    pub target_revenue: f64,
    pub achieved_revenue: f64,
    pub spec: TariffSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostingRecord {
    pub network: String,
    pub result: std::result::Result<HostingCapacity, String>,
    /// Roof-potential PV of the network at scale 1, kW.
    pub potential_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResults {
    pub networks: Vec<String>,
    pub tariffs: Vec<String>,
    pub references: Vec<String>,
    pub year_fraction: f64,
    pub step_minutes: f64,
    pub cells: Vec<CellResult>,
    pub calibration: Vec<CalibrationRecord>,
    pub hosting: Vec<HostingRecord>,
    pub overload_curve: OverloadCurve,
}

impl ScenarioResults {
    pub fn cell(&self, network: &str, tariff: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.network == network && c.tariff == tariff)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportManifest {
    pub written: Vec<PathBuf>,
    /// Tables that could not be produced, with the reason.
    pub missing: Vec<(String, String)>,
}

/// Six significant digits, plain notation where reasonable.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x.is_infinite() { format!("{}inf", if x < 0.0 { "-" } else { "" }) } else { "0".into() };
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn s(x: &str) -> String {
    x.to_string()
}

pub fn emit_report(results: &ScenarioResults, out: &Path) -> Result<ReportManifest> {
    let tables = out.join("tables");
    let plots = out.join("plotdata");
    fs::create_dir_all(&tables)?;
    fs::create_dir_all(&plots)?;
    let mut manifest = ReportManifest::default();
    let annual = 1.0 / results.year_fraction;
    let emit = |dir: &Path, name: &str, t: Table, manifest: &mut ReportManifest| -> Result<()> {
        let path = dir.join(name);
        t.write(&path)?;
        manifest.written.push(path);
        Ok(())
    };

    // Ordered (network, tariff) pairs that have results.
    let mut cells = Vec::new();
    for n in &results.networks {
        for t in &results.tariffs {
            match results.cell(n, t) {
                Some(c) => cells.push(c),
                None => manifest.missing.push((format!("{n}/{t}"), "no results".into())),
            }
        }
    }

    let mut cap = Table::new(&["network", "tariff", "pv_kw", "battery_kwh", "import_mwh", "export_mwh", "peak_import_kw"]);
    let mut rec = Table::new(&["network", "tariff", "utility_revenue", "reference_revenue", "recovery_ratio", "grid_portion"]);
    let mut bills = Table::new(&["building_id", "tariff", "volumetric_import", "export_credit", "capacity_charge", "grid_portion", "total"]);
    let mut kpi = Table::new(&[
        "network", "tariff", "building_id", "pv_kw", "battery_kwh", "self_consumption", "self_sufficiency",
        "annual_import_kwh", "annual_export_kwh", "net_producer", "annual_bill", "annual_cost", "max_peak_import_kw",
    ]);
    let mut matching = Table::new(&["network", "tariff", "building_id", "self_consumption", "self_sufficiency", "net_producer"]);
    let mut cost = Table::new(&["network", "tariff", "building_id", "annual_cost"]);
    for c in &cells {
        let sum = |f: fn(&BuildingKpi) -> f64| c.kpis.iter().map(f).sum::<f64>();
        let peak = c.powerflow.as_ref().map_or(f64::NAN, |p| p.peak_import);
        cap.push(vec![
            s(&c.network),
            s(&c.tariff),
            fmt6(sum(|k| k.pv_capacity)),
            fmt6(sum(|k| k.battery_capacity)),
            fmt6(sum(|k| k.annual_import) / 1000.0),
            fmt6(sum(|k| k.annual_export) / 1000.0),
            fmt6(peak),
        ]);
        rec.push(vec![
            s(&c.network),
            s(&c.tariff),
            fmt6(c.utility_revenue * annual),
            fmt6(c.reference_revenue * annual),
            fmt6(c.utility_revenue / c.reference_revenue),
            fmt6(c.grid_portion * annual),
        ]);
        for (b, bill) in &c.bills {
            bills.push(vec![
                s(b),
                s(&c.tariff),
                fmt6(bill.volumetric_import * annual),
                fmt6(bill.export_credit * annual),
                fmt6(bill.capacity_charge * annual),
                fmt6(bill.grid_portion * annual),
                fmt6(bill.total * annual),
            ]);
        }
        for (k, ac) in c.kpis.iter().zip(&c.annual_cost) {
            let max_peak = k.peak_import_by_period.iter().copied().fold(0.0, f64::max);
            kpi.push(vec![
                s(&c.network),
                s(&c.tariff),
                s(&k.building_id),
                fmt6(k.pv_capacity),
                fmt6(k.battery_capacity),
                fmt6(k.self_consumption),
                fmt6(k.self_sufficiency),
                fmt6(k.annual_import),
                fmt6(k.annual_export),
                s(if k.net_producer { "true" } else { "false" }),
                fmt6(k.annual_bill),
                fmt6(*ac),
                fmt6(max_peak),
            ]);
            matching.push(vec![
                s(&c.network),
                s(&c.tariff),
                s(&k.building_id),
                fmt6(k.self_consumption),
                fmt6(k.self_sufficiency),
                s(if k.net_producer { "true" } else { "false" }),
            ]);
            cost.push(vec![s(&c.network), s(&c.tariff), s(&k.building_id), fmt6(*ac)]);
        }
    }
    emit(&tables, "capacities.csv", cap, &mut manifest)?;
    emit(&tables, "grid_recovery.csv", rec, &mut manifest)?;
    emit(&tables, "bills.csv", bills, &mut manifest)?;
    emit(&tables, "building_kpi.csv", kpi, &mut manifest)?;
    emit(&plots, "energy_matching.csv", matching, &mut manifest)?;
    emit(&plots, "annual_cost.csv", cost, &mut manifest)?;

    let mut rank = Table::new(&["network", "tariff", "reference", "n", "m", "p_value", "exact"]);
    for n in &results.networks {
        for r in &results.references {
            let Some(rc) = results.cell(n, r) else { continue };
            for t in &results.tariffs {
                if t == r {
                    continue;
                }
                let Some(c) = results.cell(n, t) else { continue };
                if c.annual_cost.is_empty() || rc.annual_cost.is_empty() {
                    continue;
                }
                let test = rank_sum_test(&c.annual_cost, &rc.annual_cost);
                rank.push(vec![
                    s(n),
                    s(t),
                    s(r),
                    c.annual_cost.len().to_string(),
                    rc.annual_cost.len().to_string(),
                    fmt6(test.p_value),
                    s(if test.exact { "true" } else { "false" }),
                ]);
            }
        }
    }
    emit(&tables, "rank_sum.csv", rank, &mut manifest)?;

    let mut calib = Table::new(&["network", "tariff", "scale", "target_revenue", "achieved_revenue", "coefficients"]);
    for c in &results.calibration {
        calib.push(vec![
            s(&c.network),
            s(&c.tariff),
            fmt6(c.scale),
            fmt6(c.target_revenue * annual),
            fmt6(c.achieved_revenue * annual),
            c.spec.describe(),
        ]);
    }
    if results.calibration.is_empty() {
        manifest.missing.push(("tables/calibration.csv".into(), "calibration disabled".into()));
    } else {
        emit(&tables, "calibration.csv", calib, &mut manifest)?;
    }

    let with_pf: Vec<_> = cells.iter().filter_map(|c| c.powerflow.as_ref().map(|p| (*c, p))).collect();
    if with_pf.is_empty() {
        manifest.missing.push(("power-flow tables".into(), "power flow not run".into()));
    } else {
        let mut tr = Table::new(&[
            "network", "tariff", "rating_kva", "peak_import_kw", "peak_export_kw", "overload_hours_pa",
            "overload_events", "curve_violations",
        ]);
        let mut ld = Table::new(&["network", "tariff", "rank", "duration_share", "lv_to_mv_kw"]);
        let mut ev = Table::new(&["network", "tariff", "start_step", "duration_min", "peak_loading", "permissible", "violates_curve"]);
        let mut lines = Table::new(&["network", "tariff", "line", "p95_loading", "max_loading", "overloaded_steps"]);
        let mut volt = Table::new(&["network", "tariff", "bus", "p95_over", "p95_under", "steps_above_limit", "steps_below_limit"]);
        for (c, p) in &with_pf {
            tr.push(vec![
                s(&c.network),
                s(&c.tariff),
                fmt6(p.rating_kva),
                fmt6(p.peak_import),
                fmt6(p.peak_export),
                fmt6(p.overload.overload_hours * annual),
                p.overload.events.len().to_string(),
                p.overload.violations.to_string(),
            ]);
            // Figure convention: import from the upstream grid is drawn negative.
            let n = p.overload.load_duration.len();
            let mut sorted: Vec<f64> = p.overload.load_duration.iter().map(|f| -f).collect();
            sorted.sort_by(|a, b| b.total_cmp(a));
            for (i, v) in sorted.iter().enumerate() {
                ld.push(vec![
                    s(&c.network),
                    s(&c.tariff),
                    i.to_string(),
                    fmt6((i + 1) as f64 / n as f64),
                    fmt6(*v),
                ]);
            }
            for e in &p.overload.events {
                ev.push(vec![
                    s(&c.network),
                    s(&c.tariff),
                    e.start.to_string(),
                    fmt6(e.duration_minutes),
                    fmt6(e.peak_loading),
                    fmt6(results.overload_curve.permissible(e.duration_minutes)),
                    s(if e.violates_curve { "true" } else { "false" }),
                ]);
            }
            for l in &p.stats.lines {
                lines.push(vec![
                    s(&c.network),
                    s(&c.tariff),
                    s(&l.line),
                    fmt6(l.p95_loading),
                    fmt6(l.max_loading),
                    l.count_overloaded.to_string(),
                ]);
            }
            for b in &p.stats.buses {
                volt.push(vec![
                    s(&c.network),
                    s(&c.tariff),
                    s(&b.bus),
                    fmt6(b.p95_over),
                    fmt6(b.p95_under),
                    b.count_over.to_string(),
                    b.count_under.to_string(),
                ]);
            }
        }
        emit(&tables, "transformer.csv", tr, &mut manifest)?;
        emit(&plots, "load_duration.csv", ld, &mut manifest)?;
        emit(&plots, "overload_events.csv", ev, &mut manifest)?;
        emit(&plots, "line_loading.csv", lines, &mut manifest)?;
        emit(&plots, "voltage.csv", volt, &mut manifest)?;
        let mut curve = Table::new(&["duration_min", "permissible_loading"]);
        for &(d, l) in &results.overload_curve.points {
            curve.push(vec![fmt6(d), fmt6(l)]);
        }
        emit(&plots, "overload_curve.csv", curve, &mut manifest)?;
    }

    if !results.hosting.is_empty() {
        let mut h = Table::new(&["network", "scale", "bounded", "pv_kw", "note"]);
        for r in &results.hosting {
            match &r.result {
                Ok(hc) => h.push(vec![
                    s(&r.network),
                    fmt6(hc.scale),
                    s(if hc.bounded { "true" } else { "false" }),
                    fmt6(hc.scale * r.potential_kw),
                    s(if hc.bounded { "" } else { "unbounded within cap" }),
                ]),
                Err(e) => h.push(vec![s(&r.network), s(""), s(""), s(""), s(e)]),
            }
        }
        emit(&tables, "hosting_capacity.csv", h, &mut manifest)?;
    }

    let mut m = Table::new(&["item", "status"]);
    for p in &manifest.written {
        let rel = p.strip_prefix(out).unwrap_or(p);
        m.push(vec![rel.display().to_string(), s("written")]);
    }
    for (item, why) in &manifest.missing {
        m.push(vec![s(item), format!("missing: {why}")]);
    }
    m.write(&out.join("MANIFEST.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_digits() {
        assert_eq!(fmt6(0.0), "0");
        assert_eq!(fmt6(1.0), "1");
        assert_eq!(fmt6(19.35), "19.35");
        assert_eq!(fmt6(123456.789), "123457");
        assert_eq!(fmt6(0.000123456789), "0.000123457");
        assert_eq!(fmt6(-2.5), "-2.5");
        assert_eq!(fmt6(-1e-300), "-1.00000e-300");
        assert_eq!(fmt6(1.0 / 3.0), "0.333333");
    }
}
