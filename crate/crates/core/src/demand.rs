//! Building load profiles consistent with a measured transformer curve.
//!
//! Stage 1 assigns each building a same-category reference shape and scales it to the
//! building's estimated energy. Stage 2 adjusts the scaled profiles so that their sum
//! equals the transformer curve, with minimum weighted L1 change.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::Datelike;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{MathProgram, SolverOptions};
use crate::time::{hour_of_day, is_weekday, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildingCategory {
    Apartment,
    House,
    NonResidential,
}

impl BuildingCategory {
    pub const ALL: [BuildingCategory; 3] = [
        BuildingCategory::Apartment,
        BuildingCategory::House,
        BuildingCategory::NonResidential,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BuildingCategory::Apartment => "apartment",
            BuildingCategory::House => "house",
            BuildingCategory::NonResidential => "non_residential",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "apartment" => Ok(BuildingCategory::Apartment),
            "house" => Ok(BuildingCategory::House),
            "non_residential" | "not_residential" | "nonresidential" => {
                Ok(BuildingCategory::NonResidential)
            }
            other => Err(Error::InvalidInput(format!("unknown building category `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingMeta {
    pub building_id: String,
    pub category: BuildingCategory,
    /// m²
    pub floor_area: f64,
    pub era: String,
}

/// Specific consumption (kWh/m²/yr) per category and construction era.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub entries: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Default for CoefficientTable {
    /// Placeholder values of plausible magnitude; not taken from any building norm.
    fn default() -> Self {
        let era = |a: f64, b: f64, c: f64| {
            BTreeMap::from([
                ("pre1980".to_string(), a),
                ("1980-2000".to_string(), b),
                ("post2000".to_string(), c),
            ])
        };
        CoefficientTable {
            entries: BTreeMap::from([
                ("apartment".to_string(), era(32.0, 30.0, 27.0)),
                ("house".to_string(), era(38.0, 35.0, 31.0)),
                ("non_residential".to_string(), era(70.0, 62.0, 55.0)),
            ]),
        }
    }
}

impl CoefficientTable {
    pub fn get(&self, category: BuildingCategory, era: &str) -> Option<f64> {
        self.entries.get(category.as_str()).and_then(|m| m.get(era)).copied()
    }
}

/// Yearly consumption estimate, kWh.
pub fn estimate_annual_energy(meta: &BuildingMeta, table: &CoefficientTable) -> Result<f64> {
    if !(meta.floor_area > 0.0) {
        return Err(Error::InvalidInput(format!(
            "{}: floor area must be positive",
            meta.building_id
        )));
    }
    let coeff = table
        .get(meta.category, &meta.era)
        .ok_or_else(|| Error::MissingCoefficient {
            category: meta.category.as_str().into(),
            era: meta.era.clone(),
        })?;
    if !(coeff > 0.0) {
        return Err(Error::InvalidInput(format!(
            "{}: coefficient {coeff} for {}/{} must be positive",
            meta.building_id,
            meta.category.as_str(),
            meta.era
        )));
    }
    Ok(meta.floor_area * coeff)
}

/// A measured shape, normalised to sum to one over the grid, with the yearly energy of
/// the meter it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProfile {
    pub id: String,
    pub category: BuildingCategory,
    pub shape: Vec<f64>,
    pub reference_annual_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLibrary {
    pub profiles: Vec<ReferenceProfile>,
}

impl ReferenceLibrary {
    pub fn validate(&self) -> Result<()> {
        for p in &self.profiles {
            let sum: f64 = p.shape.iter().sum();
            if p.shape.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "profile {} is not a normalised non-negative shape (sum {sum})",
                    p.id
                )));
            }
        }
        Ok(())
    }

    pub fn of_category(&self, c: BuildingCategory) -> Vec<usize> {
        (0..self.profiles.len())
            .filter(|&i| self.profiles[i].category == c)
            .collect()
    }
}

/// Mismatch between a building's energy and a reference meter's energy.
pub fn shape_mismatch(building_kwh: f64, profile: &ReferenceProfile) -> f64 {
    (building_kwh / profile.reference_annual_kwh).ln().abs()
}

/// Assigns a library profile to every building.
///
/// Within each category every profile may be used at most `ceil(buildings/profiles)`
/// times, spreading shapes across the fleet; subject to that the total mismatch is
/// minimal. The transportation LP is totally unimodular, so its vertex solution is
/// an integral assignment.
pub fn assign_profiles(
    buildings: &[(BuildingMeta, f64)],
    library: &ReferenceLibrary,
) -> Result<Vec<usize>> {
    let mut assignment = vec![usize::MAX; buildings.len()];
    for cat in BuildingCategory::ALL {
        let members: Vec<usize> = (0..buildings.len())
            .filter(|&b| buildings[b].0.category == cat)
            .collect();
        if members.is_empty() {
            continue;
        }
        let profiles = library.of_category(cat);
        if profiles.is_empty() {
            return Err(Error::MissingProfile(cat.as_str().into()));
        }
        let cap = members.len().div_ceil(profiles.len()) as f64;
        let mut lp = MathProgram::default();
        let mut var = vec![vec![0usize; profiles.len()]; members.len()];
        for (i, &b) in members.iter().enumerate() {
            for (k, &p) in profiles.iter().enumerate() {
                let cost = shape_mismatch(buildings[b].1, &library.profiles[p]);
                var[i][k] = lp.add_column(format!("x_{i}_{k}"), cost, 0.0, 1.0);
            }
        }
        for row in &var {
            lp.add_row("one", 1.0, 1.0, row.iter().map(|&j| (j, 1.0)).collect());
        }
        for k in 0..profiles.len() {
            lp.add_row("cap", 0.0, cap, var.iter().map(|r| (r[k], 1.0)).collect());
        }
        let sol = lp.solve_lp(&[], &SolverOptions::default())?;
        for (i, &b) in members.iter().enumerate() {
            let k = (0..profiles.len())
                .find(|&k| sol.values[var[i][k]] > 0.5)
                .ok_or_else(|| Error::Solver("fractional profile assignment".into()))?;
            assignment[b] = profiles[k];
        }
    }
    Ok(assignment)
}

/// Stage 1: per-building load (kW) with the assigned shape and the exact energy.
pub fn allocate_stage1(
    buildings: &[(BuildingMeta, f64)],
    library: &ReferenceLibrary,
    step_hours: f64,
) -> Result<Vec<Vec<f64>>> {
    library.validate()?;
    for (meta, e) in buildings {
        if !(*e > 0.0) {
            return Err(Error::InvalidInput(format!(
                "{}: energy estimate must be positive",
                meta.building_id
            )));
        }
    }
    let assignment = assign_profiles(buildings, library)?;
    Ok(buildings
        .iter()
        .zip(assignment)
        .map(|((_, e), p)| {
            library.profiles[p]
                .shape
                .iter()
                .map(|s| s * e / step_hours)
                .collect()
        })
        .collect())
}

/// Stage 2 with weights equal to each building's inverse energy over the grid.
pub fn reconcile_stage2(profiles: &[Vec<f64>], transformer_load: &[f64]) -> Result<Vec<Vec<f64>>> {
    let weights: Vec<f64> = profiles
        .iter()
        .map(|p| {
            let e: f64 = p.iter().sum();
            if e > 0.0 {
                1.0 / e
            } else {
                f64::INFINITY
            }
        })
        .collect();
    reconcile_weighted(profiles, transformer_load, &weights)
}

/// Minimises `Σ_b w_b Σ_t |adjusted − profile|` subject to the adjusted profiles being
/// non-negative and summing to the transformer load at every step.
///
/// The program separates by step. Positive gaps go to the cheapest active buildings,
/// negative gaps are removed from the cheapest first; among equally weighted buildings
/// the change is split in proportion to their load (equally if none of them draws power
/// at that step), which is one of the optimal vertices' convex combinations.
pub fn reconcile_weighted(
    profiles: &[Vec<f64>],
    transformer_load: &[f64],
    weights: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let n = transformer_load.len();
    if weights.len() != profiles.len() {
        return Err(Error::LengthMismatch {
            what: "weights",
            expected: profiles.len(),
            actual: weights.len(),
        });
    }
    for p in profiles {
        if p.len() != n {
            return Err(Error::LengthMismatch {
                what: "building profile",
                expected: n,
                actual: p.len(),
            });
        }
    }
    if let Some(index) = transformer_load.iter().position(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::NegativeValue {
            what: "transformer load",
            index,
            value: transformer_load[index],
        });
    }
    let mut order: Vec<usize> = (0..profiles.len()).collect();
    order.sort_by(|a, b| weights[*a].total_cmp(&weights[*b]).then(a.cmp(b)));
    let groups = weight_groups(&order, weights);

    let mut out: Vec<Vec<f64>> = profiles.to_vec();
    let mut infeasible = Vec::new();
    for t in 0..n {
        let sum: f64 = profiles.iter().map(|p| p[t]).sum();
        let gap = transformer_load[t] - sum;
        if gap == 0.0 {
            continue;
        }
        if gap > 0.0 {
            let Some(group) = groups.first() else {
                infeasible.push(t);
                continue;
            };
            let base: f64 = group.iter().map(|&b| profiles[b][t]).sum();
            for &b in group {
                let share = if base > 0.0 {
                    profiles[b][t] / base
                } else {
                    1.0 / group.len() as f64
                };
                out[b][t] = profiles[b][t] + gap * share;
            }
        } else {
            let mut remaining = -gap;
            for g in &groups {
                let base: f64 = g.iter().map(|&b| profiles[b][t]).sum();
                if base <= 0.0 {
                    continue;
                }
                if remaining >= base {
                    for &b in g {
                        out[b][t] = 0.0;
                    }
                    remaining -= base;
                } else {
                    let keep = 1.0 - remaining / base;
                    for &b in g {
                        out[b][t] = profiles[b][t] * keep;
                    }
                    remaining = 0.0;
                }
                if remaining <= 0.0 {
                    break;
                }
            }
        }
    }
    if !infeasible.is_empty() {
        return Err(Error::ReconciliationInfeasible(infeasible));
    }
    Ok(out)
}

fn weight_groups(order: &[usize], weights: &[f64]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &b in order {
        match groups.last_mut() {
            Some(g) if weights[g[0]] == weights[b] => g.push(b),
            _ => groups.push(vec![b]),
        }
    }
    groups
}

/// Weighted L1 change between two profile sets.
pub fn stage2_objective(before: &[Vec<f64>], after: &[Vec<f64>], weights: &[f64]) -> f64 {
    before
        .iter()
        .zip(after)
        .zip(weights)
        .map(|((a, b), w)| w * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .sum()
}

/// Reference library and a matching transformer curve from a seeded generator.
///
/// Each shape is a category-specific daily pattern with random Fourier harmonics, a
/// winter-peaking seasonal factor and multiplicative noise, clipped at zero and
/// normalised. The transformer curve is the sum of all library loads with 3 % noise.
pub fn synth_profiles(seed: u64, n_per_category: usize, grid: &TimeGrid) -> Result<(ReferenceLibrary, Vec<f64>)> {
    if n_per_category == 0 {
        return Err(Error::InvalidInput("need at least one profile per category".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut profiles = Vec::new();
    for cat in BuildingCategory::ALL {
        for i in 0..n_per_category {
            let energy = match cat {
                BuildingCategory::Apartment => rng.gen_range(1_800.0..3_500.0),
                BuildingCategory::House => rng.gen_range(3_500.0..7_000.0),
                BuildingCategory::NonResidential => rng.gen_range(8_000.0..30_000.0),
            };
            let shape = synth_shape(&mut rng, cat, grid);
            profiles.push(ReferenceProfile {
                id: format!("{}-{i}", cat.as_str()),
                category: cat,
                shape,
                reference_annual_kwh: energy,
            });
        }
    }
    let noise: Normal<f64> = Normal::new(1.0, 0.03).expect("valid normal");
    let ts = grid.step_hours();
    let transformer = (0..grid.len())
        .map(|t| {
            let base: f64 = profiles
                .iter()
                .map(|p| p.shape[t] * p.reference_annual_kwh / ts)
                .sum();
            base * noise.sample(&mut rng).max(0.5)
        })
        .collect();
    Ok((ReferenceLibrary { profiles }, transformer))
}

/// One normalised synthetic load shape: a smooth daily pattern plus short appliance
/// events (cooking, washing) that set most of the metered peaks.
pub fn synth_shape(rng: &mut ChaCha8Rng, cat: BuildingCategory, grid: &TimeGrid) -> Vec<f64> {
    let phase: [f64; 3] = [rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(0.0..2.0 * PI)];
    let amp: [f64; 3] = [rng.gen_range(0.2..0.4), rng.gen_range(0.25..0.5), rng.gen_range(0.05..0.15)];
    let seasonal = rng.gen_range(0.15..0.35);
    let noise = Normal::new(0.0, 0.1).expect("valid normal");
    let mut v: Vec<f64> = grid
        .timestamps()
        .iter()
        .map(|ts| {
            let h = hour_of_day(ts);
            let doy = ts.ordinal() as f64;
            let season = 1.0 + seasonal * (2.0 * PI * (doy - 15.0) / 365.0).cos();
            let bump = |centre: f64, width: f64| (-((h - centre) / width).powi(2)).exp();
            let daily = match cat {
                BuildingCategory::NonResidential => {
                    let open = if is_weekday(ts) { 1.0 } else { 0.35 };
                    0.35 + open * (bump(12.0 + phase[0], 4.0) * (1.0 + amp[0]))
                }
                _ => {
                    let weekend = if is_weekday(ts) { 1.0 } else { 1.1 };
                    weekend
                        * (0.3
                            + amp[0] * bump(7.5 + phase[0], 1.2)
                            + (0.4 + amp[1]) * bump(19.0 + phase[1], 2.0)
                            + 0.15 * bump(12.5, 1.5))
                }
            };
            let harmonic = 1.0 + amp[2] * (2.0 * PI * h / 24.0 * 3.0 + phase[2]).sin();
            let value = daily * season * harmonic * (1.0 + noise.sample(rng));
            value.max(0.0)
        })
        .collect();

    // (events per day, height relative to the mean level); larger buildings aggregate
    // more appliances, so their events are more frequent but relatively smaller.
    let (events, height) = match cat {
        BuildingCategory::House => (1..=3, 3.0..8.0),
        BuildingCategory::Apartment => (2..=5, 1.0..2.5),
        BuildingCategory::NonResidential => (1..=2, 0.8..1.8),
    };
    let per_day = (1440 / grid.step_minutes()) as usize;
    let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
    let max_len = (45 / grid.step_minutes()).max(1) as usize;
    for day in v.chunks_mut(per_day) {
        for _ in 0..rng.gen_range(events.clone()) {
            let u: f64 = rng.gen();
            let centre: f64 = if u < 0.3 {
                7.0
            } else if u < 0.5 {
                12.0
            } else {
                18.5
            };
            let hour = (centre + rng.gen_range(-1.5..1.5)).clamp(0.0, 23.75);
            let start = ((hour * 60.0) as usize / grid.step_minutes() as usize).min(day.len() - 1);
            let len = rng.gen_range(1..=max_len);
            let h = mean * rng.gen_range(height.clone());
            for x in day.iter_mut().skip(start).take(len) {
                *x += h;
            }
        }
    }
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::DEFAULT_YEAR;

    fn meta(id: &str, cat: BuildingCategory, area: f64) -> BuildingMeta {
        BuildingMeta {
            building_id: id.into(),
            category: cat,
            floor_area: area,
            era: "post2000".into(),
        }
    }

    #[test]
    fn energy_estimate() {
        let mut table = CoefficientTable::default();
        table.entries.get_mut("house").unwrap().insert("post2000".into(), 35.0);
        let m = meta("h", BuildingCategory::House, 100.0);
        assert_eq!(estimate_annual_energy(&m, &table).unwrap(), 3500.0);
        let big = meta("h", BuildingCategory::House, 200.0);
        assert_eq!(estimate_annual_energy(&big, &table).unwrap(), 7000.0);
        table.entries.get_mut("house").unwrap().insert("post2000".into(), 0.0);
        assert!(estimate_annual_energy(&m, &table).is_err());
        let odd = BuildingMeta { era: "medieval".into(), ..m };
        assert!(matches!(
            estimate_annual_energy(&odd, &CoefficientTable::default()),
            Err(Error::MissingCoefficient { .. })
        ));
    }

    #[test]
    fn synth_is_deterministic_and_normalised() {
        let g = TimeGrid::representative_days(DEFAULT_YEAR, 60, 14).unwrap();
        let (a, ta) = synth_profiles(7, 1, &g).unwrap();
        let (b, tb) = synth_profiles(7, 1, &g).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!(a.profiles.len(), 3);
        for p in &a.profiles {
            assert!((p.shape.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.shape.iter().all(|v| *v >= 0.0));
        }
        let (c, _) = synth_profiles(8, 1, &g).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_building_takes_whole_curve() {
        let base = vec![vec![1.0, 2.0, 3.0]];
        let target = [1.5, 1.0, 3.0];
        let out = reconcile_stage2(&base, &target).unwrap();
        assert_eq!(out[0], vec![1.5, 1.0, 3.0]);
    }

    #[test]
    fn two_equal_buildings_split_the_gap() {
        let base = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let target = [2.0, 4.4];
        let out = reconcile_stage2(&base, &target).unwrap();
        assert_eq!(out[0][0], 1.0);
        assert!((out[0][1] - 2.2).abs() < 1e-12 && (out[1][1] - 2.2).abs() < 1e-12);
    }

    #[test]
    fn idle_buildings_share_a_positive_gap() {
        let base = vec![vec![0.0, 1.0], vec![0.0, 1.0]];
        let out = reconcile_stage2(&base, &[1.0, 2.0]).unwrap();
        assert_eq!(out, vec![vec![0.5, 1.0], vec![0.5, 1.0]]);
        match reconcile_stage2(&[], &[1.0]) {
            Err(Error::ReconciliationInfeasible(steps)) => assert_eq!(steps, vec![0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_category_profile() {
        let g = TimeGrid::representative_days(DEFAULT_YEAR, 60, 7).unwrap();
        let (mut lib, _) = synth_profiles(1, 1, &g).unwrap();
        lib.profiles.retain(|p| p.category != BuildingCategory::House);
        let b = vec![(meta("h", BuildingCategory::House, 100.0), 3000.0)];
        assert!(matches!(
            allocate_stage1(&b, &lib, 1.0),
            Err(Error::MissingProfile(_))
        ));
        let zero = vec![(meta("a", BuildingCategory::Apartment, 100.0), 0.0)];
        assert!(allocate_stage1(&zero, &lib, 1.0).is_err());
    }
}
