//! Tariff structures, price schedules, billing and revenue calibration.

mod billing;
mod calibration;
mod config;
mod schedule;
mod spec;

pub use billing::{bill, bill_exchange, grid_revenue, BillBreakdown};
pub use calibration::{average_specs, calibrate, fleet_revenue, Calibrated, CalibrationContext};
pub use config::{RatesEntry, SeasonEntry, TariffEntry, TariffFile, WindowEntry};
pub use schedule::{build_schedule, ChargedPeriod, TariffSchedule};
pub use spec::{
    canonical_name, Adjustable, CapacityChargeRule, PeakWindow, PriceComponents, Rates, Structure,
    TariffSpec, TouSeason, EXPORT_PRICE, PRESET_NAMES, TAX,
};
