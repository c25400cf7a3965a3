use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{hour_of_day, weekday_index, BillingHorizon};

/// Constant tax component, currency/kWh.
pub const TAX: f64 = 0.0292;
/// Constant export (feed-in) remuneration, currency/kWh.
pub const EXPORT_PRICE: f64 = 0.095;

/// Per-kWh import price split into its three components (currency/kWh).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceComponents {
    pub energy_cost: f64,
    pub grid_cost: f64,
    pub tax: f64,
}

impl PriceComponents {
    pub fn total(&self) -> f64 {
        self.energy_cost + self.grid_cost + self.tax
    }
}

/// Energy and grid rates of one price band, excluding tax (currency/kWh).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub energy: f64,
    pub grid: f64,
}

impl Rates {
    pub fn cents(energy: f64, grid: f64) -> Self {
        Rates {
            energy: energy / 100.0,
            grid: grid / 100.0,
        }
    }

    fn scaled(self, s: f64) -> Self {
        Rates {
            energy: self.energy * s,
            grid: self.grid * s,
        }
    }
}

/// Peak window: a set of weekdays (0 = Monday) and a half-open hour interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakWindow {
    pub days: Vec<u32>,
    pub start_hour: f64,
    pub end_hour: f64,
}

impl PeakWindow {
    pub fn weekdays(start_hour: f64, end_hour: f64) -> Self {
        PeakWindow {
            days: (0..5).collect(),
            start_hour,
            end_hour,
        }
    }

    pub fn every_day(start_hour: f64, end_hour: f64) -> Self {
        PeakWindow {
            days: (0..7).collect(),
            start_hour,
            end_hour,
        }
    }

    pub fn contains(&self, ts: &NaiveDateTime) -> bool {
        let h = hour_of_day(ts);
        self.days.contains(&weekday_index(ts)) && h >= self.start_hour && h < self.end_hour
    }
}

/// One season of a time-of-use tariff. A season without windows is flat at `off_peak`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouSeason {
    pub name: String,
    pub months: Vec<u32>,
    #[serde(default)]
    pub windows: Vec<PeakWindow>,
    pub peak: Rates,
    pub off_peak: Rates,
}

/// Capacity charge per billing period, priced by season.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityChargeRule {
    pub horizon: BillingHorizon,
    /// currency/kW per billing period
    pub rate_by_season: BTreeMap<String, f64>,
    pub season_calendar: BTreeMap<String, Vec<u32>>,
}

impl CapacityChargeRule {
    pub fn season_of(&self, month: u32) -> Option<&str> {
        self.season_calendar
            .iter()
            .find(|(_, months)| months.contains(&month))
            .map(|(s, _)| s.as_str())
    }

    pub fn rate_for_month(&self, month: u32) -> Option<f64> {
        self.season_of(month)
            .and_then(|s| self.rate_by_season.get(s).copied())
    }

    pub fn validate(&self) -> Result<()> {
        check_partition(self.season_calendar.values())?;
        for season in self.season_calendar.keys() {
            match self.rate_by_season.get(season) {
                Some(r) if *r >= 0.0 && r.is_finite() => {}
                Some(r) => {
                    return Err(Error::InvalidTariff(format!(
                        "capacity rate {r} for season {season} is negative"
                    )))
                }
                None => {
                    return Err(Error::InvalidTariff(format!(
                        "no capacity rate for season {season}"
                    )))
                }
            }
        }
        Ok(())
    }

    fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.rate_by_season.values_mut().for_each(|r| *r *= s);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Structure {
    Flat {
        rates: Rates,
    },
    TimeOfUse {
        seasons: Vec<TouSeason>,
    },
    /// energy = grid = level · L_t / mean(L)
    Dynamic {
        level: f64,
    },
    /// Volumetric energy plus a capacity charge replacing the grid cost.
    Capacity {
        energy: f64,
        rule: CapacityChargeRule,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffSpec {
    pub name: String,
    pub structure: Structure,
    pub tax: f64,
    pub export_price: f64,
    /// currency/month
    pub fixed_fee: f64,
}

/// Coefficient groups a calibration may rescale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjustable {
    /// Every energy and grid coefficient (plus capacity rates, if any).
    Volumetric,
    /// Only capacity rates.
    CapacityRates,
}

pub const PRESET_NAMES: [&str; 7] = [
    "ft-reference",
    "dt-reference",
    "dt-solar",
    "dt-summer-flat",
    "dynamic",
    "ct-monthly",
    "ct-daily",
];

fn summer_months() -> Vec<u32> {
    (4..=9).collect()
}

fn winter_months() -> Vec<u32> {
    vec![1, 2, 3, 10, 11, 12]
}

fn ft_rates() -> Rates {
    Rates::cents(7.98, 8.45)
}

fn dt_peak() -> Rates {
    Rates::cents(9.17, 9.86)
}

fn dt_off_peak() -> Rates {
    Rates::cents(5.87, 5.26)
}

fn dt_winter_season() -> TouSeason {
    TouSeason {
        name: "winter".into(),
        months: winter_months(),
        windows: vec![PeakWindow::weekdays(6.0, 22.0)],
        peak: dt_peak(),
        off_peak: dt_off_peak(),
    }
}

/// Canonical form of a tariff name: lowercase, hyphen-separated.
pub fn canonical_name(name: &str) -> String {
    let s: String = name
        .trim()
        .to_lowercase()
        .chars()
        .map(|c| if c == ' ' || c == '_' { '-' } else { c })
        .collect();
    match s.as_str() {
        "ft" | "flat" | "reference-ft" => "ft-reference".into(),
        "dt" | "double" | "reference-dt" => "dt-reference".into(),
        _ => s,
    }
}

impl TariffSpec {
    /// The seven tariffs with their published coefficients.
    pub fn preset(name: &str) -> Result<Self> {
        let canonical = canonical_name(name);
        let structure = match canonical.as_str() {
            "ft-reference" => Structure::Flat { rates: ft_rates() },
            "dt-reference" => Structure::TimeOfUse {
                seasons: vec![TouSeason {
                    name: "all".into(),
                    months: (1..=12).collect(),
                    windows: vec![PeakWindow::weekdays(6.0, 22.0)],
                    peak: dt_peak(),
                    off_peak: dt_off_peak(),
                }],
            },
            "dt-solar" => Structure::TimeOfUse {
                seasons: vec![
                    TouSeason {
                        name: "summer".into(),
                        months: summer_months(),
                        windows: vec![PeakWindow::every_day(18.0, 24.0)],
                        peak: dt_peak(),
                        off_peak: dt_off_peak(),
                    },
                    dt_winter_season(),
                ],
            },
            "dt-summer-flat" => Structure::TimeOfUse {
                seasons: vec![
                    TouSeason {
                        name: "summer".into(),
                        months: summer_months(),
                        windows: vec![],
                        peak: ft_rates(),
                        off_peak: ft_rates(),
                    },
                    dt_winter_season(),
                ],
            },
            "dynamic" => Structure::Dynamic { level: 0.1076 },
            "ct-monthly" => Structure::Capacity {
                energy: 0.0798,
                rule: CapacityChargeRule {
                    horizon: BillingHorizon::Monthly,
                    rate_by_season: BTreeMap::from([("all".to_string(), 16.4)]),
                    season_calendar: BTreeMap::from([("all".to_string(), (1..=12).collect())]),
                },
            },
            "ct-daily" => Structure::Capacity {
                energy: 0.0798,
                rule: CapacityChargeRule {
                    horizon: BillingHorizon::Daily,
                    rate_by_season: BTreeMap::from([
                        ("summer".to_string(), 0.5312),
                        ("fall-spring".to_string(), 0.9296),
                        ("winter".to_string(), 1.3280),
                    ]),
                    season_calendar: BTreeMap::from([
                        ("summer".to_string(), vec![6, 7, 8]),
                        ("fall-spring".to_string(), vec![3, 4, 5, 9, 10, 11]),
                        ("winter".to_string(), vec![12, 1, 2]),
                    ]),
                },
            },
            _ => return Err(Error::UnknownTariff(name.to_string())),
        };
        Ok(TariffSpec {
            name: canonical,
            structure,
            tax: TAX,
            export_price: EXPORT_PRICE,
            fixed_fee: 0.0,
        })
    }

    pub fn all_presets() -> Vec<TariffSpec> {
        PRESET_NAMES
            .iter()
            .map(|n| Self::preset(n).expect("preset"))
            .collect()
    }

    pub fn is_capacity_based(&self) -> bool {
        matches!(self.structure, Structure::Capacity { .. })
    }

    pub fn capacity_rule(&self) -> Option<&CapacityChargeRule> {
        match &self.structure {
            Structure::Capacity { rule, .. } => Some(rule),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidTariff(format!(
                "{}: {what} = {v} must be finite and >= 0",
                self.name
            )))
        };
        for (what, v) in [
            ("tax", self.tax),
            ("export price", self.export_price),
            ("fixed fee", self.fixed_fee),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(what, v);
            }
        }
        match &self.structure {
            Structure::Flat { rates } => check_rates(&self.name, rates)?,
            Structure::TimeOfUse { seasons } => {
                check_partition(seasons.iter().map(|s| &s.months))?;
                for s in seasons {
                    check_rates(&self.name, &s.peak)?;
                    check_rates(&self.name, &s.off_peak)?;
                    for w in &s.windows {
                        if w.days.iter().any(|d| *d > 6)
                            || !(0.0..=24.0).contains(&w.start_hour)
                            || !(0.0..=24.0).contains(&w.end_hour)
                            || w.start_hour >= w.end_hour
                        {
                            return Err(Error::InvalidTariff(format!(
                                "{}: malformed peak window {w:?}",
                                self.name
                            )));
                        }
                    }
                }
            }
            Structure::Dynamic { level } => {
                if !(*level >= 0.0 && level.is_finite()) {
                    return bad("dynamic level", *level);
                }
            }
            Structure::Capacity { energy, rule } => {
                if !(*energy >= 0.0 && energy.is_finite()) {
                    return bad("energy", *energy);
                }
                rule.validate()?;
            }
        }
        Ok(())
    }

    /// Rescales a coefficient group by `s`, leaving tax, export price and fees untouched.
    /// Compact coefficient listing in ct/kWh and currency/kW, for reports.
    pub fn describe(&self) -> String {
        let ct = |r: &Rates| format!("{:.4}+{:.4}", r.energy * 100.0, r.grid * 100.0);
        match &self.structure {
            Structure::Flat { rates } => format!("flat {}", ct(rates)),
            Structure::TimeOfUse { seasons } => seasons
                .iter()
                .map(|s| format!("{}: peak {} off {}", s.name, ct(&s.peak), ct(&s.off_peak)))
                .collect::<Vec<_>>()
                .join("; "),
            Structure::Dynamic { level } => format!("dynamic level {:.4}", level * 100.0),
            Structure::Capacity { energy, rule } => {
                let rates = rule
                    .rate_by_season
                    .iter()
                    .map(|(k, v)| format!("{k} {v:.4}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                format!("energy {:.4}; capacity {rates}", energy * 100.0)
            }
        }
    }

    pub fn scaled(&self, group: Adjustable, s: f64) -> TariffSpec {
        let mut out = self.clone();
        match (&mut out.structure, group) {
            (Structure::Flat { rates }, _) => *rates = rates.scaled(s),
            (Structure::TimeOfUse { seasons }, _) => {
                for season in seasons {
                    season.peak = season.peak.scaled(s);
                    season.off_peak = season.off_peak.scaled(s);
                }
            }
            (Structure::Dynamic { level }, _) => *level *= s,
            (Structure::Capacity { energy, rule }, Adjustable::Volumetric) => {
                *energy *= s;
                *rule = rule.scaled(s);
            }
            (Structure::Capacity { rule, .. }, Adjustable::CapacityRates) => {
                *rule = rule.scaled(s);
            }
        }
        out
    }
}

fn check_rates(name: &str, r: &Rates) -> Result<()> {
    if r.energy >= 0.0 && r.grid >= 0.0 && r.energy.is_finite() && r.grid.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTariff(format!(
            "{name}: negative or non-finite rate {r:?}"
        )))
    }
}

fn check_partition<'a>(sets: impl Iterator<Item = &'a Vec<u32>>) -> Result<()> {
    let mut seen = [0u32; 12];
    for months in sets {
        for &m in months {
            if !(1..=12).contains(&m) {
                return Err(Error::InvalidTariff(format!("month {m} out of range")));
            }
            seen[(m - 1) as usize] += 1;
        }
    }
    if let Some(i) = seen.iter().position(|&c| c != 1) {
        return Err(Error::InvalidTariff(format!(
            "season calendar must cover each month exactly once (month {} appears {} times)",
            i + 1,
            seen[i]
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for spec in TariffSpec::all_presets() {
            spec.validate().unwrap();
        }
    }

    #[test]
    fn names_are_canonicalised() {
        assert_eq!(TariffSpec::preset("FT reference").unwrap().name, "ft-reference");
        assert_eq!(TariffSpec::preset("CT_Daily").unwrap().name, "ct-daily");
        assert!(matches!(
            TariffSpec::preset("nightly"),
            Err(Error::UnknownTariff(_))
        ));
    }

    #[test]
    fn overlapping_season_calendar_is_rejected() {
        let mut spec = TariffSpec::preset("ct-daily").unwrap();
        if let Structure::Capacity { rule, .. } = &mut spec.structure {
            rule.season_calendar.get_mut("summer").unwrap().push(9);
        }
        assert!(spec.validate().is_err());
    }
}
