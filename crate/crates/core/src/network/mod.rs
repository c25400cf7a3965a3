//! Radial low-voltage networks: time-series power flow, transformer overload analysis,
//! voltage and loading statistics, and PV hosting capacity.

mod hosting;
mod metrics;
mod model;
mod overload;
mod sweep;

pub use hosting::{hosting_capacity, violations_at, HostingCapacity, HostingOptions, Violations};
pub use metrics::{voltage_line_stats, BusStats, GridStats, LineStats, VoltageLimits};
pub use model::{load_network, Bus, Line, Network, NetworkFile, Transformer, S_BASE_KVA};
pub use overload::{overload_events, overload_events_in, OverloadCurve, OverloadEvent, OverloadReport};
pub use sweep::{
    net_loads, run_net_loads, run_timeseries, sweep, sweep_snapshot, PowerFlowResult, Snapshot, SweepOptions,
};
