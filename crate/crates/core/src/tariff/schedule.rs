use serde::{Deserialize, Serialize};

use super::spec::{CapacityChargeRule, PriceComponents, Structure, TariffSpec};
use crate::error::{Error, Result};
use crate::time::{billing_periods, TimeGrid};
use chrono::Datelike;

/// One billing period of a capacity charge with its (season-resolved) rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargedPeriod {
    pub id: String,
    pub steps: Vec<usize>,
    /// currency/kW
    pub rate: f64,
    /// Share of the calendar period inside the grid; the charge is weighted by it.
    pub coverage: f64,
}

impl ChargedPeriod {
    pub fn effective_rate(&self) -> f64 {
        self.rate * self.coverage
    }
}

/// Per-step prices of one tariff on one time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffSchedule {
    pub name: String,
    pub import_price: Vec<PriceComponents>,
    pub export_price: f64,
    pub capacity_rule: Option<CapacityChargeRule>,
    pub capacity_periods: Vec<ChargedPeriod>,
    /// currency/month
    pub fixed_fee: f64,
    /// Share of the calendar year covered by the schedule.
    pub year_fraction: f64,
    pub timestep_hours: f64,
}

impl TariffSchedule {
    pub fn len(&self) -> usize {
        self.import_price.len()
    }

    pub fn is_empty(&self) -> bool {
        self.import_price.is_empty()
    }

    pub fn total_price(&self, t: usize) -> f64 {
        self.import_price[t].total()
    }

    /// Fixed fees charged over the schedule's horizon.
    pub fn fixed_fees(&self) -> f64 {
        self.fixed_fee * 12.0 * self.year_fraction
    }

    pub fn min_total_price(&self) -> f64 {
        self.import_price
            .iter()
            .map(PriceComponents::total)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Builds the per-step price schedule of `spec` on `grid`.
///
/// `aggregate_load` is required for the dynamic tariff and must be strictly positive.
pub fn build_schedule(
    spec: &TariffSpec,
    grid: &TimeGrid,
    aggregate_load: Option<&[f64]>,
) -> Result<TariffSchedule> {
    spec.validate()?;
    let n = grid.len();
    let tax = spec.tax;
    let mut capacity_rule = None;
    let mut capacity_periods = Vec::new();
    let import_price: Vec<PriceComponents> = match &spec.structure {
        Structure::Flat { rates } => vec![
            PriceComponents {
                energy_cost: rates.energy,
                grid_cost: rates.grid,
                tax,
            };
            n
        ],
        Structure::TimeOfUse { seasons } => grid
            .timestamps()
            .iter()
            .map(|ts| {
                let month = ts.month();
                let season = seasons
                    .iter()
                    .find(|s| s.months.contains(&month))
                    .expect("validated partition");
                let r = if season.windows.iter().any(|w| w.contains(ts)) {
                    season.peak
                } else {
                    season.off_peak
                };
                PriceComponents {
                    energy_cost: r.energy,
                    grid_cost: r.grid,
                    tax,
                }
            })
            .collect(),
        Structure::Dynamic { level } => {
            let load = aggregate_load.ok_or(Error::MissingAggregateLoad)?;
            if load.len() != n {
                return Err(Error::LengthMismatch {
                    what: "aggregate load",
                    expected: n,
                    actual: load.len(),
                });
            }
            if let Some(t) = load.iter().position(|l| !(*l > 0.0) || !l.is_finite()) {
                return Err(Error::NonPositiveAggregateLoad(t));
            }
            let mean = load.iter().sum::<f64>() / n as f64;
            load.iter()
                .map(|l| {
                    let c = level * (l / mean);
                    PriceComponents {
                        energy_cost: c,
                        grid_cost: c,
                        tax,
                    }
                })
                .collect()
        }
        Structure::Capacity { energy, rule } => {
            for p in billing_periods(grid, rule.horizon) {
                let rate = rule
                    .rate_for_month(p.month)
                    .expect("validated season calendar");
                capacity_periods.push(ChargedPeriod {
                    id: p.id,
                    steps: p.steps,
                    rate,
                    coverage: p.coverage,
                });
            }
            capacity_rule = Some(rule.clone());
            vec![
                PriceComponents {
                    energy_cost: *energy,
                    grid_cost: 0.0,
                    tax,
                };
                n
            ]
        }
    };
    Ok(TariffSchedule {
        name: spec.name.clone(),
        import_price,
        export_price: spec.export_price,
        capacity_rule,
        capacity_periods,
        fixed_fee: spec.fixed_fee,
        year_fraction: grid.year_fraction(),
        timestep_hours: grid.step_hours(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::DEFAULT_YEAR;

    fn hourly() -> TimeGrid {
        TimeGrid::year(DEFAULT_YEAR, 60).unwrap()
    }

    #[test]
    fn dynamic_requires_positive_load() {
        let spec = TariffSpec::preset("dynamic").unwrap();
        let g = hourly();
        assert!(matches!(
            build_schedule(&spec, &g, None),
            Err(Error::MissingAggregateLoad)
        ));
        let mut load = vec![1.0; g.len()];
        load[17] = 0.0;
        assert!(matches!(
            build_schedule(&spec, &g, Some(&load)),
            Err(Error::NonPositiveAggregateLoad(17))
        ));
        assert!(build_schedule(&spec, &g, Some(&load[1..])).is_err());
    }

    #[test]
    fn constant_dynamic_load_gives_constant_price() {
        let spec = TariffSpec::preset("dynamic").unwrap();
        let g = hourly();
        let s = build_schedule(&spec, &g, Some(&vec![3.5; g.len()])).unwrap();
        let first = s.total_price(0);
        for p in &s.import_price {
            assert_eq!(p.energy_cost, p.grid_cost);
            assert_eq!(p.total(), first);
        }
    }

    #[test]
    fn capacity_schedules_carry_periods() {
        let g = hourly();
        let m = build_schedule(&TariffSpec::preset("ct-monthly").unwrap(), &g, None).unwrap();
        assert_eq!(m.capacity_periods.len(), 12);
        let d = build_schedule(&TariffSpec::preset("ct-daily").unwrap(), &g, None).unwrap();
        assert_eq!(d.capacity_periods.len(), 365);
        assert_eq!(d.capacity_periods[0].rate, 1.3280);
        assert_eq!(d.capacity_periods[180].rate, 0.5312);
        let ft = build_schedule(&TariffSpec::preset("ft").unwrap(), &g, None).unwrap();
        assert!(ft.capacity_periods.is_empty() && ft.capacity_rule.is_none());
    }
}
