use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Permissible transformer loading as a function of overload duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverloadCurve {
    /// (duration in minutes, permissible loading as a fraction of rating)
    pub points: Vec<(f64, f64)>,
}

impl Default for OverloadCurve {
    /// Placeholder shape, not a manufacturer or standard curve.
    fn default() -> Self {
        OverloadCurve {
            points: vec![(5.0, 2.0), (30.0, 1.5), (120.0, 1.3), (480.0, 1.1)],
        }
    }
}

impl OverloadCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let c = OverloadCurve { points };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidInput("overload curve has no points".into()));
        }
        for (i, &(d, l)) in self.points.iter().enumerate() {
            if !(d > 0.0) || !(l >= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "overload curve point {i}: need duration > 0 and loading >= 1, got ({d}, {l})"
                )));
            }
            if i > 0 {
                let (pd, pl) = self.points[i - 1];
                if !(d > pd) || !(l < pl) {
                    return Err(Error::InvalidInput(format!(
                        "overload curve point {i}: durations must increase and loadings strictly decrease"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Linear interpolation in log-duration, held constant beyond the end points.
    pub fn permissible(&self, duration_minutes: f64) -> f64 {
        let p = &self.points;
        if duration_minutes <= p[0].0 {
            return p[0].1;
        }
        let last = p[p.len() - 1];
        if duration_minutes >= last.0 {
            return last.1;
        }
        let k = p.iter().position(|&(d, _)| d >= duration_minutes).expect("inside range");
        let (d0, l0) = p[k - 1];
        let (d1, l1) = p[k];
        let w = (duration_minutes.ln() - d0.ln()) / (d1.ln() - d0.ln());
        l0 + w * (l1 - l0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverloadEvent {
    pub start: usize,
    pub steps: usize,
    pub duration_minutes: f64,
    /// Peak |flow| over rating.
    pub peak_loading: f64,
    pub violates_curve: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverloadReport {
    pub events: Vec<OverloadEvent>,
    pub load_duration: Vec<f64>,
    pub overload_hours: f64,
    pub violations: usize,
}

/// Maximal runs of `|flow| > rating` (unity power factor, so kW compare to kVA).
pub fn overload_events(flow: &[f64], s_rated: f64, step_minutes: f64, curve: &OverloadCurve) -> OverloadReport {
    overload_events_in(flow, &[0..flow.len()], s_rated, step_minutes, curve)
}

/// As [`overload_events`], but runs never span the given segment boundaries (used for
/// grids made of separate representative periods).
pub fn overload_events_in(
    flow: &[f64],
    segments: &[Range<usize>],
    s_rated: f64,
    step_minutes: f64,
    curve: &OverloadCurve,
) -> OverloadReport {
    let mut events = Vec::new();
    for seg in segments {
        let mut t = seg.start;
        while t < seg.end {
            if flow[t].abs() > s_rated {
                let start = t;
                let mut peak: f64 = 0.0;
                while t < seg.end && flow[t].abs() > s_rated {
                    peak = peak.max(flow[t].abs());
                    t += 1;
                }
                let steps = t - start;
                let duration = steps as f64 * step_minutes;
                let peak_loading = peak / s_rated;
                events.push(OverloadEvent {
                    start,
                    steps,
                    duration_minutes: duration,
                    peak_loading,
                    violates_curve: peak_loading > curve.permissible(duration),
                });
            } else {
                t += 1;
            }
        }
    }
    let mut load_duration = flow.to_vec();
    load_duration.sort_by(|a, b| b.total_cmp(a));
    let overload_hours = events.iter().fold(0.0, |h, e| h + e.duration_minutes) / 60.0;
    let violations = events.iter().filter(|e| e.violates_curve).count();
    OverloadReport {
        events,
        load_duration,
        overload_hours,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation() {
        let c = OverloadCurve::default();
        assert_eq!(c.permissible(1.0), 2.0);
        assert_eq!(c.permissible(30.0), 1.5);
        assert_eq!(c.permissible(10_000.0), 1.1);
        let mid = (5f64 * 30.0).sqrt();
        assert!((c.permissible(mid) - 1.75).abs() < 1e-12);
    }

    #[test]
    fn invalid_curves() {
        assert!(OverloadCurve::new(vec![(5.0, 0.9)]).is_err());
        assert!(OverloadCurve::new(vec![(5.0, 1.5), (10.0, 1.6)]).is_err());
        assert!(OverloadCurve::new(vec![]).is_err());
    }

    #[test]
    fn events() {
        let c = OverloadCurve::default();
        let r = overload_events(&[50.0; 8], 100.0, 15.0, &c);
        assert!(r.events.is_empty());
        assert_eq!(r.load_duration, vec![50.0; 8]);

        let flow = [90.0, 120.0, 115.0, 80.0, -190.0, 90.0];
        let r = overload_events(&flow, 100.0, 15.0, &c);
        assert_eq!(r.events.len(), 2);
        assert_eq!(r.events[0].steps, 2);
        assert!(!r.events[0].violates_curve);
        assert!((r.events[1].peak_loading - 1.9).abs() < 1e-12);
        assert!(r.events[1].violates_curve);
        assert_eq!(r.overload_hours, 0.75);

        let split = overload_events_in(&[120.0, 120.0], &[0..1, 1..2], 100.0, 60.0, &c);
        assert_eq!(split.events.len(), 2);
    }
}
