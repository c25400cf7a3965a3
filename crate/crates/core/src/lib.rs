pub mod demand;
pub mod design;
pub mod error;
pub mod fixture;
pub mod io;
pub mod kpi;
pub mod network;
pub mod optimizer;
pub mod pv;
pub mod report;
pub mod scenario;
pub mod stats;
pub mod synth;
pub mod tariff;
pub mod time;

pub use design::{BatteryParams, SystemDesign};
pub use error::{Error, Result};
