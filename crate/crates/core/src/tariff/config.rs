//! Tariff definitions in configuration files. Volumetric rates are written in
//! cents/kWh and capacity rates in currency/kW, as tariffs are usually published.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::spec::{CapacityChargeRule, PeakWindow, Rates, Structure, TariffSpec, TouSeason};
use crate::error::{Error, Result};
use crate::time::BillingHorizon;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesEntry {
    pub energy_ct: f64,
    #[serde(default)]
    pub grid_ct: f64,
}

impl From<&RatesEntry> for Rates {
    fn from(r: &RatesEntry) -> Self {
        Rates::cents(r.energy_ct, r.grid_ct)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowEntry {
    /// Day names ("mon".."sun").
    pub days: Vec<String>,
    pub start_hour: f64,
    pub end_hour: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeasonEntry {
    pub name: String,
    pub months: Vec<u32>,
    #[serde(default, rename = "window")]
    pub windows: Vec<WindowEntry>,
    pub peak: Option<RatesEntry>,
    pub off_peak: RatesEntry,
}

/// One `[[tariff]]` table: either a preset with overrides, or a full definition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffEntry {
    pub name: String,
    pub preset: Option<String>,
    /// flat | time-of-use | dynamic | capacity
    pub kind: Option<String>,
    pub tax_ct: Option<f64>,
    pub export_ct: Option<f64>,
    pub fixed_fee: Option<f64>,
    pub energy_ct: Option<f64>,
    pub grid_ct: Option<f64>,
    pub level_ct: Option<f64>,
    pub capacity_horizon: Option<BillingHorizon>,
    pub capacity_rates: Option<BTreeMap<String, f64>>,
    pub season_calendar: Option<BTreeMap<String, Vec<u32>>>,
    #[serde(default, rename = "season")]
    pub seasons: Vec<SeasonEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TariffFile {
    #[serde(default, rename = "tariff")]
    pub tariffs: Vec<TariffEntry>,
}

impl TariffFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn specs(&self) -> Result<Vec<TariffSpec>> {
        self.tariffs.iter().map(TariffEntry::to_spec).collect()
    }
}

fn day_index(name: &str) -> Result<u32> {
    let key = name.trim().to_lowercase();
    let days = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];
    days.iter()
        .position(|d| key.starts_with(d))
        .map(|i| i as u32)
        .ok_or_else(|| Error::InvalidTariff(format!("unknown day `{name}`")))
}

impl TariffEntry {
    pub fn to_spec(&self) -> Result<TariffSpec> {
        let mut spec = match (&self.preset, &self.kind) {
            (Some(p), _) => TariffSpec::preset(p)?,
            (None, Some(kind)) => self.definition(kind)?,
            (None, None) => {
                return Err(Error::InvalidTariff(format!(
                    "tariff `{}` needs either `preset` or `kind`",
                    self.name
                )))
            }
        };
        spec.name = self.name.clone();
        if let Some(t) = self.tax_ct {
            spec.tax = t / 100.0;
        }
        if let Some(e) = self.export_ct {
            spec.export_price = e / 100.0;
        }
        if let Some(f) = self.fixed_fee {
            spec.fixed_fee = f;
        }
        if self.preset.is_some() {
            self.apply_overrides(&mut spec)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn apply_overrides(&self, spec: &mut TariffSpec) -> Result<()> {
        match &mut spec.structure {
            Structure::Flat { rates } => {
                if let Some(e) = self.energy_ct {
                    rates.energy = e / 100.0;
                }
                if let Some(g) = self.grid_ct {
                    rates.grid = g / 100.0;
                }
            }
            Structure::Dynamic { level } => {
                if let Some(l) = self.level_ct {
                    *level = l / 100.0;
                }
            }
            Structure::Capacity { energy, rule } => {
                if let Some(e) = self.energy_ct {
                    *energy = e / 100.0;
                }
                if let Some(h) = self.capacity_horizon {
                    rule.horizon = h;
                }
                if let Some(cal) = &self.season_calendar {
                    rule.season_calendar = cal.clone();
                }
                if let Some(rates) = &self.capacity_rates {
                    rule.rate_by_season = rates.clone();
                }
            }
            Structure::TimeOfUse { seasons } => {
                if !self.seasons.is_empty() {
                    *seasons = self.tou_seasons()?;
                }
            }
        }
        Ok(())
    }

    fn tou_seasons(&self) -> Result<Vec<TouSeason>> {
        self.seasons
            .iter()
            .map(|s| {
                let windows = s
                    .windows
                    .iter()
                    .map(|w| {
                        Ok(PeakWindow {
                            days: w.days.iter().map(|d| day_index(d)).collect::<Result<_>>()?,
                            start_hour: w.start_hour,
                            end_hour: w.end_hour,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let off_peak = Rates::from(&s.off_peak);
                Ok(TouSeason {
                    name: s.name.clone(),
                    months: s.months.clone(),
                    windows,
                    peak: s.peak.as_ref().map(Rates::from).unwrap_or(off_peak),
                    off_peak,
                })
            })
            .collect()
    }

    fn definition(&self, kind: &str) -> Result<TariffSpec> {
        let missing = |field: &str| {
            Error::InvalidTariff(format!("tariff `{}` ({kind}) needs `{field}`", self.name))
        };
        let structure = match kind {
            "flat" => Structure::Flat {
                rates: Rates::cents(
                    self.energy_ct.ok_or_else(|| missing("energy_ct"))?,
                    self.grid_ct.ok_or_else(|| missing("grid_ct"))?,
                ),
            },
            "time-of-use" => {
                if self.seasons.is_empty() {
                    return Err(missing("season"));
                }
                Structure::TimeOfUse {
                    seasons: self.tou_seasons()?,
                }
            }
            "dynamic" => Structure::Dynamic {
                level: self.level_ct.ok_or_else(|| missing("level_ct"))? / 100.0,
            },
            "capacity" => Structure::Capacity {
                energy: self.energy_ct.ok_or_else(|| missing("energy_ct"))? / 100.0,
                rule: CapacityChargeRule {
                    horizon: self.capacity_horizon.ok_or_else(|| missing("capacity_horizon"))?,
                    rate_by_season: self.capacity_rates.clone().ok_or_else(|| missing("capacity_rates"))?,
                    season_calendar: self
                        .season_calendar
                        .clone()
                        .unwrap_or_else(|| BTreeMap::from([("all".to_string(), (1..=12).collect())])),
                },
            },
            other => {
                return Err(Error::InvalidTariff(format!(
                    "tariff `{}`: unknown kind `{other}`",
                    self.name
                )))
            }
        };
        Ok(TariffSpec {
            name: self.name.clone(),
            structure,
            tax: super::spec::TAX,
            export_price: super::spec::EXPORT_PRICE,
            fixed_fee: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_time_of_use_definition() {
        let text = r#"
[[tariff]]
name = "my-dt"
kind = "time-of-use"

[[tariff.season]]
name = "all"
months = [1,2,3,4,5,6,7,8,9,10,11,12]
peak = { energy_ct = 9.17, grid_ct = 9.86 }
off_peak = { energy_ct = 5.87, grid_ct = 5.26 }

[[tariff.season.window]]
days = ["mon", "tue", "wed", "thu", "fri"]
start_hour = 6
end_hour = 22
"#;
        let specs = TariffFile::parse(text).unwrap().specs().unwrap();
        let mut reference = TariffSpec::preset("dt-reference").unwrap();
        reference.name = "my-dt".into();
        assert_eq!(specs[0], reference);
    }

    #[test]
    fn preset_with_overrides() {
        let text = r#"
[[tariff]]
name = "ct-daily-steep"
preset = "ct-daily"
capacity_rates = { summer = 1.0, fall-spring = 2.0, winter = 3.0 }
export_ct = 6.0
"#;
        let spec = &TariffFile::parse(text).unwrap().specs().unwrap()[0];
        assert_eq!(spec.export_price, 0.06);
        assert_eq!(spec.capacity_rule().unwrap().rate_by_season["winter"], 3.0);
    }

    #[test]
    fn reports_missing_fields() {
        let text = "[[tariff]]\nname = \"x\"\nkind = \"flat\"\nenergy_ct = 5.0\n";
        let err = TariffFile::parse(text).unwrap().specs().unwrap_err();
        assert!(err.to_string().contains("grid_ct"));
        assert!(TariffFile::parse("[[tariff]]\nname = \"x\"\nbogus = 1\n").is_err());
    }
}
