use serde::{Deserialize, Serialize};

use super::schedule::TariffSchedule;
use crate::design::SystemDesign;
use crate::error::{Error, Result};

/// Evaluated bill of one building under one schedule (currency).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillBreakdown {
    pub volumetric_import: f64,
    pub export_credit: f64,
    pub capacity_charge: f64,
    pub per_period_peaks: Vec<(String, f64)>,
    pub grid_portion: f64,
    /// Tax collected through the volumetric import charge.
    pub tax: f64,
    pub fixed_fees: f64,
    pub total: f64,
}

impl BillBreakdown {
    /// Revenue kept by the utility: everything billed except pass-through taxes,
    /// net of export remuneration.
    pub fn utility_revenue(&self) -> f64 {
        self.volumetric_import - self.tax + self.capacity_charge + self.fixed_fees
            - self.export_credit
    }
}

pub fn bill(schedule: &TariffSchedule, dispatch: &SystemDesign) -> Result<BillBreakdown> {
    bill_exchange(schedule, &dispatch.import, &dispatch.export)
}

/// Bills an import/export pair (kW per step).
pub fn bill_exchange(
    schedule: &TariffSchedule,
    import: &[f64],
    export: &[f64],
) -> Result<BillBreakdown> {
    let n = schedule.len();
    for (what, s) in [("import", import), ("export", export)] {
        if s.len() != n {
            return Err(Error::LengthMismatch {
                what,
                expected: n,
                actual: s.len(),
            });
        }
        if let Some(index) = s.iter().position(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::NegativeValue {
                what,
                index,
                value: s[index],
            });
        }
    }
    let ts = schedule.timestep_hours;
    let mut volumetric_import = 0.0;
    let mut grid_volumetric = 0.0;
    let mut tax = 0.0;
    for (p, price) in import.iter().zip(&schedule.import_price) {
        volumetric_import += p * price.total() * ts;
        grid_volumetric += p * price.grid_cost * ts;
        tax += p * price.tax * ts;
    }
    let export_credit = export.iter().sum::<f64>() * schedule.export_price * ts;

    let mut capacity_charge = 0.0;
    let mut per_period_peaks = Vec::with_capacity(schedule.capacity_periods.len());
    for period in &schedule.capacity_periods {
        let peak = period
            .steps
            .iter()
            .map(|&t| import[t])
            .fold(0.0, f64::max);
        capacity_charge += peak * period.effective_rate();
        per_period_peaks.push((period.id.clone(), peak));
    }
    let fixed_fees = schedule.fixed_fees();
    Ok(BillBreakdown {
        volumetric_import,
        export_credit,
        capacity_charge,
        per_period_peaks,
        grid_portion: grid_volumetric + capacity_charge,
        tax,
        fixed_fees,
        total: volumetric_import - export_credit + capacity_charge + fixed_fees,
    })
}

/// Aggregated utility revenue and grid-cost recovery over a building fleet.
///
/// Returns `(total_revenue, grid_cost_recovery)`, where the revenue is billed imports
/// (including capacity charges) net of export remuneration.
pub fn grid_revenue(bills: &[BillBreakdown], dispatches: &[SystemDesign]) -> Result<(f64, f64)> {
    if bills.len() != dispatches.len() {
        return Err(Error::LengthMismatch {
            what: "bills vs dispatches",
            expected: dispatches.len(),
            actual: bills.len(),
        });
    }
    let revenue = bills
        .iter()
        .map(|b| b.volumetric_import + b.capacity_charge - b.export_credit)
        .sum();
    let recovery = bills.iter().map(|b| b.grid_portion).sum();
    Ok((revenue, recovery))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tariff::{build_schedule, TariffSpec};
    use crate::time::{TimeGrid, DEFAULT_YEAR};

    fn schedule(name: &str) -> TariffSchedule {
        let g = TimeGrid::year(DEFAULT_YEAR, 60).unwrap();
        build_schedule(&TariffSpec::preset(name).unwrap(), &g, None).unwrap()
    }

    #[test]
    fn flat_constant_import() {
        let s = schedule("ft");
        let b = bill_exchange(&s, &vec![1.0; 8760], &vec![0.0; 8760]).unwrap();
        assert!((b.volumetric_import - 1695.06).abs() < 1e-8);
        assert_eq!(b.total, b.volumetric_import);
        assert!(b.per_period_peaks.is_empty());
    }

    #[test]
    fn zero_dispatch_costs_nothing() {
        for name in ["ft", "dt", "ct-monthly", "ct-daily"] {
            let s = schedule(name);
            let b = bill_exchange(&s, &vec![0.0; 8760], &vec![0.0; 8760]).unwrap();
            assert_eq!(b.total, 0.0);
        }
    }

    #[test]
    fn monthly_capacity_charge() {
        let s = schedule("ct-monthly");
        let mut import = vec![0.5; 8760];
        for p in &s.capacity_periods {
            import[p.steps[3]] = 2.0;
        }
        let b = bill_exchange(&s, &import, &vec![0.0; 8760]).unwrap();
        assert!((b.capacity_charge - 393.6).abs() < 1e-9);
        assert_eq!(b.per_period_peaks.len(), 12);
        assert!(b.per_period_peaks.iter().all(|(_, p)| *p == 2.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = schedule("ft");
        assert!(matches!(
            bill_exchange(&s, &[1.0], &[0.0]),
            Err(Error::LengthMismatch { .. })
        ));
        let mut import = vec![0.0; 8760];
        import[5] = -1.0;
        assert!(matches!(
            bill_exchange(&s, &import, &vec![0.0; 8760]),
            Err(Error::NegativeValue { index: 5, .. })
        ));
    }

    #[test]
    fn revenue_is_additive() {
        let s = schedule("ft");
        let mut import = vec![0.0; 8760];
        import[..1000].iter_mut().for_each(|v| *v = 1.0);
        let d = SystemDesign::from_exchange(import, vec![0.0; 8760]);
        let b = bill(&s, &d).unwrap();
        let (rev1, rec1) = grid_revenue(&[b.clone()], &[d.clone()]).unwrap();
        assert!((rec1 - 84.5).abs() < 1e-9);
        let (rev2, rec2) = grid_revenue(&[b.clone(), b], &[d.clone(), d]).unwrap();
        assert_eq!(rev2, 2.0 * rev1);
        assert_eq!(rec2, 2.0 * rec1);
        assert!(grid_revenue(&[], &[SystemDesign::default()]).is_err());
    }
}
