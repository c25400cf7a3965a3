use serde::{Deserialize, Serialize};

use super::sweep::PowerFlowResult;
use crate::stats::percentile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoltageLimits {
    pub lower: f64,
    pub upper: f64,
}

impl Default for VoltageLimits {
    fn default() -> Self {
        VoltageLimits { lower: 0.9, upper: 1.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusStats {
    pub bus: String,
    /// 95th percentile of `v − 1` over steps with `v > 1`; 0 when there are none.
    pub p95_over: f64,
    /// 95th percentile of `1 − v` over steps with `v < 1`; 0 when there are none.
    pub p95_under: f64,
    pub count_over: usize,
    pub count_under: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineStats {
    pub line: String,
    pub p95_loading: f64,
    pub max_loading: f64,
    pub count_overloaded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStats {
    pub buses: Vec<BusStats>,
    pub lines: Vec<LineStats>,
}

impl GridStats {
    pub fn voltage_violations(&self) -> usize {
        self.buses.iter().map(|b| b.count_over + b.count_under).sum()
    }

    pub fn line_overloads(&self) -> usize {
        self.lines.iter().map(|l| l.count_overloaded).sum()
    }
}

pub fn voltage_line_stats(result: &PowerFlowResult, limits: &VoltageLimits) -> GridStats {
    let buses = result
        .bus_ids
        .iter()
        .zip(&result.bus_voltage)
        .map(|(id, v)| {
            let over: Vec<f64> = v.iter().filter(|x| **x > 1.0).map(|x| x - 1.0).collect();
            let under: Vec<f64> = v.iter().filter(|x| **x < 1.0).map(|x| 1.0 - x).collect();
            BusStats {
                bus: id.clone(),
                p95_over: percentile(&over, 95.0).unwrap_or(0.0),
                p95_under: percentile(&under, 95.0).unwrap_or(0.0),
                count_over: v.iter().filter(|x| **x > limits.upper).count(),
                count_under: v.iter().filter(|x| **x < limits.lower).count(),
            }
        })
        .collect();
    let lines = result
        .line_ids
        .iter()
        .zip(&result.line_loading)
        .map(|(id, l)| LineStats {
            line: id.clone(),
            p95_loading: percentile(l, 95.0).unwrap_or(0.0),
            max_loading: l.iter().copied().fold(0.0, f64::max),
            count_overloaded: l.iter().filter(|x| **x > 1.0).count(),
        })
        .collect();
    GridStats { buses, lines }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(v: Vec<f64>) -> PowerFlowResult {
        let n = v.len();
        PowerFlowResult {
            bus_ids: vec!["b".into()],
            line_ids: vec!["l".into()],
            bus_voltage: vec![v],
            line_loading: vec![vec![0.0; n]],
            transformer_flow: vec![0.0; n],
            losses: vec![0.0; n],
            total_injection: vec![0.0; n],
        }
    }

    #[test]
    fn flat() {
        let s = voltage_line_stats(&result(vec![1.0; 50]), &VoltageLimits::default());
        assert_eq!(s.buses[0].p95_over, 0.0);
        assert_eq!(s.buses[0].p95_under, 0.0);
        assert_eq!(s.voltage_violations(), 0);
        assert_eq!(s.line_overloads(), 0);
    }

    #[test]
    fn five_percent_high() {
        let mut v = vec![1.0; 100];
        for x in v.iter_mut().take(5) {
            *x = 1.12;
        }
        let s = voltage_line_stats(&result(v), &VoltageLimits::default());
        assert!((s.buses[0].p95_over - 0.12).abs() < 1e-12);
        assert_eq!(s.buses[0].count_over, 5);
    }
}
