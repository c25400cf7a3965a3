//! Revenue-neutral calibration of tariff coefficients on fixed reference dispatches.
//!
//! Utility revenue (imports billed without tax, plus capacity charges, minus export
//! remuneration) is linear in the energy, grid and capacity coefficients, so matching a
//! target revenue reduces to one scalar linear solve.

use super::billing::bill;
use super::schedule::build_schedule;
use super::spec::{Adjustable, Structure, TariffSpec};
use crate::design::SystemDesign;
use crate::error::{Error, Result};
use crate::time::TimeGrid;

/// Relative revenue gap below which a tariff is considered already calibrated.
const FIXED_POINT_TOL: f64 = 1e-9;
/// Maximum accepted relative error after calibration.
const ACCEPT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct CalibrationContext<'a> {
    pub grid: &'a TimeGrid,
    pub aggregate_load: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated {
    pub spec: TariffSpec,
    /// Common factor applied to the adjusted coefficients (NaN when rates were set
    /// from zero rather than scaled).
    pub scale: f64,
    pub revenue: f64,
}

/// Utility revenue of `spec` summed over `dispatches`.
pub fn fleet_revenue(
    spec: &TariffSpec,
    ctx: CalibrationContext<'_>,
    dispatches: &[SystemDesign],
) -> Result<f64> {
    let schedule = build_schedule(spec, ctx.grid, ctx.aggregate_load)?;
    let mut total = 0.0;
    for d in dispatches {
        total += bill(&schedule, d)?.utility_revenue();
    }
    Ok(total)
}

/// Rescales the adjustable coefficients of `spec` so that its revenue on
/// `dispatches` equals `reference_revenue`.
///
/// Volumetric tariffs scale all energy and grid coefficients by one factor. Capacity
/// tariffs adjust the capacity rates and keep the energy coefficient; if the energy
/// revenue alone already overshoots the target, energy and capacity are scaled together.
pub fn calibrate(
    spec: &TariffSpec,
    ctx: CalibrationContext<'_>,
    dispatches: &[SystemDesign],
    reference_revenue: f64,
) -> Result<Calibrated> {
    // Export-heavy fleets can have a negative target; the solve is linear either way.
    if !reference_revenue.is_finite() || reference_revenue == 0.0 {
        return Err(Error::Calibration(format!(
            "reference revenue must be finite and nonzero, got {reference_revenue}"
        )));
    }
    let revenue = |s: &TariffSpec| fleet_revenue(s, ctx, dispatches);
    let current = revenue(spec)?;
    if ((current - reference_revenue) / reference_revenue).abs() <= FIXED_POINT_TOL {
        return Ok(Calibrated {
            spec: spec.clone(),
            scale: 1.0,
            revenue: current,
        });
    }

    let calibrated = if spec.is_capacity_based() {
        let without_capacity = revenue(&spec.scaled(Adjustable::CapacityRates, 0.0))?;
        let needed = reference_revenue - without_capacity;
        let capacity_part = current - without_capacity;
        if needed < 0.0 {
            scale_group(spec, Adjustable::Volumetric, current, reference_revenue, &revenue)?
        } else if capacity_part > 0.0 {
            let s = needed / capacity_part;
            Calibrated {
                spec: spec.scaled(Adjustable::CapacityRates, s),
                scale: s,
                revenue: f64::NAN,
            }
        } else {
            // All capacity rates are zero: solve for one uniform rate.
            let unit = uniform_capacity(spec, 1.0);
            let per_unit_rate = revenue(&unit)? - without_capacity;
            if !(per_unit_rate > 0.0) {
                return Err(Error::Calibration(format!(
                    "{}: no capacity peaks to charge",
                    spec.name
                )));
            }
            Calibrated {
                spec: uniform_capacity(spec, needed / per_unit_rate),
                scale: f64::NAN,
                revenue: f64::NAN,
            }
        }
    } else {
        scale_group(spec, Adjustable::Volumetric, current, reference_revenue, &revenue)?
    };

    let achieved = revenue(&calibrated.spec)?;
    let rel = ((achieved - reference_revenue) / reference_revenue).abs();
    if rel > ACCEPT_TOL {
        return Err(Error::Calibration(format!(
            "{}: residual relative error {rel:e}",
            spec.name
        )));
    }
    Ok(Calibrated {
        revenue: achieved,
        ..calibrated
    })
}

fn scale_group(
    spec: &TariffSpec,
    group: Adjustable,
    current: f64,
    target: f64,
    revenue: &dyn Fn(&TariffSpec) -> Result<f64>,
) -> Result<Calibrated> {
    let base = revenue(&spec.scaled(group, 0.0))?;
    let adjustable = current - base;
    if adjustable.abs() <= f64::EPSILON * current.abs().max(1.0) {
        return Err(Error::Calibration(format!(
            "{}: adjustable coefficients raise no revenue on the reference dispatches",
            spec.name
        )));
    }
    let s = (target - base) / adjustable;
    if !(s > 0.0) {
        return Err(Error::Calibration(format!(
            "{}: calibration would require negative rates (factor {s})",
            spec.name
        )));
    }
    Ok(Calibrated {
        spec: spec.scaled(group, s),
        scale: s,
        revenue: f64::NAN,
    })
}

fn uniform_capacity(spec: &TariffSpec, rate: f64) -> TariffSpec {
    let mut out = spec.clone();
    if let Structure::Capacity { rule, .. } = &mut out.structure {
        rule.rate_by_season.values_mut().for_each(|r| *r = rate);
    }
    out
}

/// Averages calibrated coefficients of the same tariff across several networks.
pub fn average_specs(specs: &[TariffSpec]) -> Result<TariffSpec> {
    let first = specs
        .first()
        .ok_or_else(|| Error::Calibration("nothing to average".into()))?;
    let n = specs.len() as f64;
    let mut out = first.clone();
    let mismatch = || Error::Calibration(format!("{}: structures differ across networks", first.name));
    match &mut out.structure {
        Structure::Flat { rates } => {
            rates.energy = 0.0;
            rates.grid = 0.0;
            for s in specs {
                let Structure::Flat { rates: r } = &s.structure else {
                    return Err(mismatch());
                };
                rates.energy += r.energy / n;
                rates.grid += r.grid / n;
            }
        }
        Structure::TimeOfUse { seasons } => {
            for (i, season) in seasons.iter_mut().enumerate() {
                let mut sum = [0.0; 4];
                for s in specs {
                    let Structure::TimeOfUse { seasons: other } = &s.structure else {
                        return Err(mismatch());
                    };
                    let o = other.get(i).ok_or_else(mismatch)?;
                    sum[0] += o.peak.energy;
                    sum[1] += o.peak.grid;
                    sum[2] += o.off_peak.energy;
                    sum[3] += o.off_peak.grid;
                }
                season.peak.energy = sum[0] / n;
                season.peak.grid = sum[1] / n;
                season.off_peak.energy = sum[2] / n;
                season.off_peak.grid = sum[3] / n;
            }
        }
        Structure::Dynamic { level } => {
            let mut sum = 0.0;
            for s in specs {
                let Structure::Dynamic { level: l } = &s.structure else {
                    return Err(mismatch());
                };
                sum += l;
            }
            *level = sum / n;
        }
        Structure::Capacity { energy, rule } => {
            let mut e = 0.0;
            for s in specs {
                let Structure::Capacity { energy: oe, .. } = &s.structure else {
                    return Err(mismatch());
                };
                e += oe;
            }
            *energy = e / n;
            for (season, rate) in rule.rate_by_season.iter_mut() {
                let mut sum = 0.0;
                for s in specs {
                    let other = s.capacity_rule().ok_or_else(mismatch)?;
                    sum += other.rate_by_season.get(season).ok_or_else(mismatch)?;
                }
                *rate = sum / n;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::DEFAULT_YEAR;

    fn fleet(grid: &TimeGrid) -> Vec<SystemDesign> {
        let n = grid.len();
        (0..3)
            .map(|b| {
                let import: Vec<f64> = (0..n)
                    .map(|t| 0.5 + ((t * (b + 3)) % 11) as f64 * 0.2)
                    .collect();
                let export: Vec<f64> = (0..n).map(|t| if t % 24 == 12 { 0.8 } else { 0.0 }).collect();
                SystemDesign::from_exchange(import, export)
            })
            .collect()
    }

    #[test]
    fn already_calibrated_is_unchanged() {
        let g = TimeGrid::representative_days(DEFAULT_YEAR, 60, 28).unwrap();
        let ctx = CalibrationContext { grid: &g, aggregate_load: None };
        let d = fleet(&g);
        let spec = TariffSpec::preset("dt").unwrap();
        let r = fleet_revenue(&spec, ctx, &d).unwrap();
        let c = calibrate(&spec, ctx, &d, r).unwrap();
        assert_eq!(c.spec, spec);
        assert_eq!(c.scale, 1.0);
    }

    #[test]
    fn halves_revenue() {
        let g = TimeGrid::representative_days(DEFAULT_YEAR, 60, 28).unwrap();
        let ctx = CalibrationContext { grid: &g, aggregate_load: None };
        let d = fleet(&g);
        let spec = TariffSpec::preset("dt-solar").unwrap();
        let r = fleet_revenue(&spec, ctx, &d).unwrap();
        let c = calibrate(&spec, ctx, &d, r / 2.0).unwrap();
        let again = fleet_revenue(&c.spec, ctx, &d).unwrap();
        assert!(((again - r / 2.0) / (r / 2.0)).abs() < 1e-9);
        assert!(c.scale > 0.0 && c.scale < 1.0);
        assert_eq!(c.spec.tax, spec.tax);
        assert_eq!(c.spec.export_price, spec.export_price);
    }

    #[test]
    fn zero_capacity_rate_is_solved_for() {
        let g = TimeGrid::representative_days(DEFAULT_YEAR, 60, 28).unwrap();
        let ctx = CalibrationContext { grid: &g, aggregate_load: None };
        let d = fleet(&g);
        let spec = TariffSpec::preset("ct-monthly")
            .unwrap()
            .scaled(Adjustable::CapacityRates, 0.0);
        let energy_only = fleet_revenue(&spec, ctx, &d).unwrap();
        let target = energy_only * 1.5;
        let c = calibrate(&spec, ctx, &d, target).unwrap();
        let rate = c.spec.capacity_rule().unwrap().rate_by_season["all"];
        assert!(rate > 0.0);
        assert!(((c.revenue - target) / target).abs() < 1e-9);
        let Structure::Capacity { energy, .. } = c.spec.structure else { unreachable!() };
        assert_eq!(energy, 0.0798);
    }

    #[test]
    fn errors() {
        let g = TimeGrid::representative_days(DEFAULT_YEAR, 60, 7).unwrap();
        let ctx = CalibrationContext { grid: &g, aggregate_load: None };
        let spec = TariffSpec::preset("ft").unwrap();
        let zero = vec![SystemDesign::from_exchange(vec![0.0; g.len()], vec![0.0; g.len()])];
        assert!(calibrate(&spec, ctx, &zero, 10.0).is_err());
        assert!(calibrate(&spec, ctx, &fleet(&g), 0.0).is_err());
        assert!(calibrate(&spec, ctx, &fleet(&g), f64::NAN).is_err());
        // fixed fees alone exceed the target: only negative rates would close the gap
        let mut fee = spec.clone();
        fee.fixed_fee = 1000.0;
        assert!(matches!(
            calibrate(&fee, ctx, &fleet(&g), 1.0),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn averaging_presets_is_identity() {
        for spec in TariffSpec::all_presets() {
            let avg = average_specs(&[spec.clone(), spec.clone()]).unwrap();
            assert_eq!(avg.name, spec.name);
            assert_eq!(avg, spec);
        }
    }
}
