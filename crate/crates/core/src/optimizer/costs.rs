use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Capital-recovery factor: the constant yearly payment per unit of investment.
pub fn annuity_factor(rate: f64, lifetime: f64) -> f64 {
    if rate == 0.0 {
        return 1.0 / lifetime;
    }
    let g = (1.0 + rate).powf(lifetime);
    rate * g / (g - 1.0)
}

/// Investment and maintenance cost parameters (currency, kW, kWh, years).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub pv_fixed_cost: f64,
    /// currency/kW
    pub pv_specific_cost: f64,
    pub battery_fixed_cost: f64,
    /// currency/kWh
    pub battery_specific_cost: f64,
    pub discount_rate: f64,
    pub system_lifetime: f64,
    pub battery_lifetime: f64,
    /// currency/kW/yr
    pub pv_maintenance: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            pv_fixed_cost: 10_049.0,
            pv_specific_cost: 1_050.0,
            battery_fixed_cost: 0.0,
            battery_specific_cost: 229.0,
            discount_rate: 0.03,
            system_lifetime: 25.0,
            battery_lifetime: 15.0,
            pv_maintenance: 20.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let costs = [
            self.pv_fixed_cost,
            self.pv_specific_cost,
            self.battery_fixed_cost,
            self.battery_specific_cost,
            self.pv_maintenance,
        ];
        if costs.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::InvalidInput("costs must be non-negative".into()));
        }
        if !(self.discount_rate > 0.0 && self.discount_rate < 1.0) {
            return Err(Error::InvalidInput("discount rate must lie in (0, 1)".into()));
        }
        if !(self.system_lifetime > 0.0 && self.battery_lifetime > 0.0) {
            return Err(Error::InvalidInput("lifetimes must be positive".into()));
        }
        Ok(())
    }

    /// Yearly cost per kW of PV (annualized investment plus maintenance).
    pub fn pv_per_kw(&self) -> f64 {
        annuity_factor(self.discount_rate, self.system_lifetime) * self.pv_specific_cost + self.pv_maintenance
    }

    pub fn pv_fixed_per_year(&self) -> f64 {
        annuity_factor(self.discount_rate, self.system_lifetime) * self.pv_fixed_cost
    }

    pub fn battery_per_kwh(&self) -> f64 {
        annuity_factor(self.discount_rate, self.battery_lifetime) * self.battery_specific_cost
    }

    pub fn battery_fixed_per_year(&self) -> f64 {
        annuity_factor(self.discount_rate, self.battery_lifetime) * self.battery_fixed_cost
    }

    /// Yearly capex (plus PV maintenance) of the given sizes.
    pub fn annualized_capex(&self, pv_kw: f64, battery_kwh: f64) -> f64 {
        let mut c = self.pv_per_kw() * pv_kw + self.battery_per_kwh() * battery_kwh;
        if pv_kw > 0.0 {
            c += self.pv_fixed_per_year();
        }
        if battery_kwh > 0.0 {
            c += self.battery_fixed_per_year();
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annuity_values() {
        assert!((annuity_factor(0.03, 25.0) - 0.057_427_871_1).abs() < 1e-9);
        assert_eq!(annuity_factor(0.0, 10.0), 0.1);
        assert!((annuity_factor(0.03, 1.0) - 1.03).abs() < 1e-12);
    }

    #[test]
    fn defaults_are_valid() {
        CostModel::default().validate().unwrap();
        let bad = CostModel {
            discount_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
