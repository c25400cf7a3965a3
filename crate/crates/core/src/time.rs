//! Simulation calendar: a fixed-offset, fixed-step grid over one non-leap year,
//! optionally reduced to blocks of representative days.

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default simulation year (non-leap).
pub const DEFAULT_YEAR: i32 = 2025;
pub const DEFAULT_STEP_MINUTES: u32 = 15;

/// Ordered timestep grid. Timestamps are interval starts in local wall-clock time
/// of a fixed UTC offset (no daylight saving).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    year: i32,
    step_minutes: u32,
    utc_offset_hours: f64,
    /// (zero-based day of year, number of days) blocks, ascending and disjoint.
    blocks: Vec<(u32, u32)>,
    #[serde(skip)]
    starts: Vec<NaiveDateTime>,
}

impl TimeGrid {
    /// Full calendar year.
    pub fn year(year: i32, step_minutes: u32) -> Result<Self> {
        let days = days_in_year(year);
        Self::from_blocks(year, step_minutes, &[(0, days)])
    }

    pub fn from_blocks(year: i32, step_minutes: u32, blocks: &[(u32, u32)]) -> Result<Self> {
        if step_minutes == 0 || 1440 % step_minutes != 0 {
            return Err(Error::InvalidInput(format!(
                "step of {step_minutes} min does not divide a day"
            )));
        }
        let n_days = days_in_year(year);
        let mut last_end = 0;
        for (i, &(start, len)) in blocks.iter().enumerate() {
            if len == 0 || start + len > n_days || (i > 0 && start < last_end) {
                return Err(Error::InvalidInput(format!(
                    "day block ({start}, {len}) is empty, overlapping or outside the year"
                )));
            }
            last_end = start + len;
        }
        if blocks.is_empty() {
            return Err(Error::InvalidInput("time grid has no days".into()));
        }
        let mut grid = TimeGrid {
            year,
            step_minutes,
            utc_offset_hours: 1.0,
            blocks: blocks.to_vec(),
            starts: Vec::new(),
        };
        grid.rebuild();
        Ok(grid)
    }

    /// `n_days` representative days: weekly blocks spread evenly over the year.
    /// `n_days >= days in year` yields the full year.
    pub fn representative_days(year: i32, step_minutes: u32, n_days: u32) -> Result<Self> {
        let total = days_in_year(year);
        if n_days == 0 {
            return Err(Error::InvalidInput("horizon of zero days".into()));
        }
        if n_days >= total {
            return Self::year(year, step_minutes);
        }
        let n_blocks = n_days.div_ceil(7);
        let mut blocks = Vec::with_capacity(n_blocks as usize);
        let mut remaining = n_days;
        let stride = total as f64 / n_blocks as f64;
        for b in 0..n_blocks {
            let len = remaining.min(7);
            remaining -= len;
            let centre = stride * (b as f64 + 0.5);
            let start = (centre - len as f64 / 2.0).floor().max(0.0) as u32;
            let start = start.min(total - len);
            blocks.push((start, len));
        }
        Self::from_blocks(year, step_minutes, &blocks)
    }

    pub fn with_utc_offset(mut self, hours: f64) -> Self {
        self.utc_offset_hours = hours;
        self
    }

    /// Restores the timestamp cache after deserialization.
    pub fn rebuild(&mut self) {
        let jan1 = NaiveDate::from_ymd_opt(self.year, 1, 1)
            .expect("valid year")
            .and_hms_opt(0, 0, 0)
            .expect("midnight");
        let per_day = 1440 / self.step_minutes;
        let mut starts = Vec::new();
        for &(start, len) in &self.blocks {
            for d in start..start + len {
                let day = jan1 + Duration::days(d as i64);
                for k in 0..per_day {
                    starts.push(day + Duration::minutes((k * self.step_minutes) as i64));
                }
            }
        }
        self.starts = starts;
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn year_number(&self) -> i32 {
        self.year
    }

    pub fn step_minutes(&self) -> u32 {
        self.step_minutes
    }

    pub fn step_hours(&self) -> f64 {
        self.step_minutes as f64 / 60.0
    }

    pub fn utc_offset_hours(&self) -> f64 {
        self.utc_offset_hours
    }

    pub fn blocks(&self) -> &[(u32, u32)] {
        &self.blocks
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.starts
    }

    pub fn timestamp(&self, t: usize) -> NaiveDateTime {
        self.starts[t]
    }

    pub fn n_days(&self) -> u32 {
        self.blocks.iter().map(|b| b.1).sum()
    }

    /// Fraction of the calendar year covered by the grid (1 for a full year).
    pub fn year_fraction(&self) -> f64 {
        self.n_days() as f64 / days_in_year(self.year) as f64
    }

    pub fn is_full_year(&self) -> bool {
        self.n_days() == days_in_year(self.year)
    }

    /// Consecutive index ranges of contiguous days.
    /// Minute of the year at which each step starts.
    pub fn minutes_of_year(&self) -> Vec<u64> {
        let per_day = (1440 / self.step_minutes) as u64;
        let mut out = Vec::with_capacity(self.len());
        for &(start, len) in &self.blocks {
            for d in start as u64..(start + len) as u64 {
                for k in 0..per_day {
                    out.push(d * 1440 + k * self.step_minutes as u64);
                }
            }
        }
        out
    }

    /// Picks this grid's steps out of a full-year series sampled every `data_minutes`,
    /// averaging when the grid step is coarser.
    pub fn resample_year(&self, series: &[f64], data_minutes: u32) -> Result<Vec<f64>> {
        if data_minutes == 0 || self.step_minutes % data_minutes != 0 {
            return Err(Error::InvalidInput(format!(
                "data step of {data_minutes} min does not divide the {} min grid step",
                self.step_minutes
            )));
        }
        let expected = (days_in_year(self.year) * 1440 / data_minutes) as usize;
        if series.len() != expected {
            return Err(Error::LengthMismatch {
                what: "full-year series",
                expected,
                actual: series.len(),
            });
        }
        let k = (self.step_minutes / data_minutes) as usize;
        Ok(self
            .minutes_of_year()
            .into_iter()
            .map(|m| {
                let i = (m / data_minutes as u64) as usize;
                series[i..i + k].iter().sum::<f64>() / k as f64
            })
            .collect())
    }

    pub fn block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let per_day = (1440 / self.step_minutes) as usize;
        let mut out = Vec::new();
        let mut at = 0;
        for &(_, len) in &self.blocks {
            let n = len as usize * per_day;
            out.push(at..at + n);
            at += n;
        }
        out
    }
}

pub fn days_in_year(year: i32) -> u32 {
    if NaiveDate::from_ymd_opt(year, 2, 29).is_some() {
        366
    } else {
        365
    }
}

pub fn days_in_month(year: i32, month: u32) -> u32 {
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)
    };
    let this = NaiveDate::from_ymd_opt(year, month, 1).expect("valid month");
    (next.expect("valid month") - this).num_days() as u32
}

/// Hour of day as a fraction, e.g. 18.25 for 18:15.
pub fn hour_of_day(ts: &NaiveDateTime) -> f64 {
    ts.hour() as f64 + ts.minute() as f64 / 60.0
}

pub fn weekday_index(ts: &NaiveDateTime) -> u32 {
    ts.weekday().num_days_from_monday()
}

pub fn is_weekday(ts: &NaiveDateTime) -> bool {
    !matches!(ts.weekday(), Weekday::Sat | Weekday::Sun)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BillingHorizon {
    Monthly,
    Daily,
}

/// Calendar window over which a capacity peak is measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillingPeriod {
    pub id: String,
    pub month: u32,
    pub steps: Vec<usize>,
    /// Share of the calendar period present in the grid (1 when complete).
    pub coverage: f64,
}

/// Groups grid steps by the billing period containing each interval start.
pub fn billing_periods(grid: &TimeGrid, horizon: BillingHorizon) -> Vec<BillingPeriod> {
    let mut out: Vec<BillingPeriod> = Vec::new();
    for (t, ts) in grid.timestamps().iter().enumerate() {
        let id = match horizon {
            BillingHorizon::Monthly => format!("{:04}-{:02}", ts.year(), ts.month()),
            BillingHorizon::Daily => ts.date().format("%Y-%m-%d").to_string(),
        };
        match out.last_mut() {
            Some(p) if p.id == id => p.steps.push(t),
            _ => {
                // Non-contiguous visits to the same period merge into the earlier entry.
                if let Some(p) = out.iter_mut().find(|p| p.id == id) {
                    p.steps.push(t);
                } else {
                    out.push(BillingPeriod {
                        id,
                        month: ts.month(),
                        steps: vec![t],
                        coverage: 0.0,
                    });
                }
            }
        }
    }
    let minutes = grid.step_minutes() as u64;
    for p in &mut out {
        let days = match horizon {
            BillingHorizon::Monthly => days_in_month(grid.year_number(), p.month) as u64,
            BillingHorizon::Daily => 1,
        };
        p.coverage = (p.steps.len() as u64 * minutes) as f64 / (days * 1440) as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_year_has_35040_quarter_hours() {
        let g = TimeGrid::year(DEFAULT_YEAR, 15).unwrap();
        assert_eq!(g.len(), 35_040);
        assert_eq!(g.year_fraction(), 1.0);
        assert_eq!(g.timestamp(0).to_string(), "2025-01-01 00:00:00");
    }

    #[test]
    fn monthly_periods_cover_full_year() {
        let g = TimeGrid::year(DEFAULT_YEAR, 60).unwrap();
        let p = billing_periods(&g, BillingHorizon::Monthly);
        assert_eq!(p.len(), 12);
        assert!(p.iter().all(|p| p.coverage == 1.0));
        assert_eq!(p[1].steps.len(), 28 * 24);
        let d = billing_periods(&g, BillingHorizon::Daily);
        assert_eq!(d.len(), 365);
    }

    #[test]
    fn representative_weeks_are_spread() {
        let g = TimeGrid::representative_days(DEFAULT_YEAR, 15, 28).unwrap();
        assert_eq!(g.n_days(), 28);
        assert_eq!(g.blocks().len(), 4);
        assert_eq!(g.len(), 28 * 96);
        let months: Vec<u32> = billing_periods(&g, BillingHorizon::Monthly)
            .iter()
            .map(|p| p.month)
            .collect();
        assert_eq!(months.len(), 4);
        let p = billing_periods(&g, BillingHorizon::Monthly);
        assert!(p.iter().all(|p| p.coverage < 0.3));
    }

    #[test]
    fn rejects_bad_steps() {
        assert!(TimeGrid::year(DEFAULT_YEAR, 7).is_err());
        assert!(TimeGrid::from_blocks(DEFAULT_YEAR, 15, &[(360, 10)]).is_err());
    }
}
