//! Seeded generators for desk-scale inputs: weather, buildings with roofs, radial
//! networks shaped like the three reference network types, and transformer curves.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{Datelike, Duration};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::demand::{BuildingCategory, BuildingMeta};
use crate::error::{Error, Result};
use crate::network::{Bus, Line, Network, NetworkFile, Transformer};
use crate::pv::{RoofSegment, SolarPosition, WeatherYear};
use crate::time::{hour_of_day, TimeGrid};

pub const DEFAULT_LATITUDE: f64 = 46.5;
pub const DEFAULT_LONGITUDE: f64 = 6.6;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Clear-sky irradiance scaled by a persistent daily clearness factor, and a seasonal
/// plus diurnal temperature with noise.
pub fn synth_weather(seed: u64, grid: &TimeGrid, latitude: f64, longitude: f64) -> WeatherYear {
    let mut rng = rng_for(seed, 1);
    let noise: Normal<f64> = Normal::new(0.0, 1.0).expect("valid normal");
    let half = Duration::seconds(grid.step_minutes() as i64 * 30);
    let mut clearness = 0.7;
    let mut day = None;
    let mut ghi = Vec::with_capacity(grid.len());
    let mut temp = Vec::with_capacity(grid.len());
    for ts in grid.timestamps() {
        if day != Some(ts.ordinal()) {
            day = Some(ts.ordinal());
            clearness = 0.55 * clearness + 0.45 * rng.gen_range(0.15..1.0);
        }
        let mid = *ts + half;
        let sun = SolarPosition::at(&mid, latitude, longitude, grid.utc_offset_hours());
        let cz = sun.cos_zenith;
        let clear = if cz > 0.0 { 1098.0 * cz * (-0.057 / cz).exp() } else { 0.0 };
        let flicker: f64 = (1.0 + 0.08 * noise.sample(&mut rng)).clamp(0.7, 1.2);
        ghi.push((clear * clearness * flicker).max(0.0));
        let doy = ts.ordinal() as f64;
        let h = hour_of_day(ts);
        temp.push(
            10.0 - 9.0 * (2.0 * PI * (doy - 20.0) / 365.0).cos()
                + 4.0 * (2.0 * PI * (h - 9.0) / 24.0).sin()
                + 1.5 * noise.sample(&mut rng),
        );
    }
    WeatherYear {
        ghi,
        ambient_temp: temp,
        latitude,
        longitude,
    }
}

const ERAS: [&str; 3] = ["pre1980", "1980-2000", "post2000"];

/// Buildings with floor areas, construction eras and roof segments, using a mixed
/// residential and commercial category split.
pub fn synth_buildings(
    seed: u64,
    n: usize,
    prefix: &str,
) -> (Vec<BuildingMeta>, BTreeMap<String, Vec<RoofSegment>>) {
    synth_buildings_with(seed, n, prefix, [0.5, 0.35, 0.15])
}

/// As [`synth_buildings`] with category shares `[house, apartment, non-residential]`.
pub fn synth_buildings_with(
    seed: u64,
    n: usize,
    prefix: &str,
    shares: [f64; 3],
) -> (Vec<BuildingMeta>, BTreeMap<String, Vec<RoofSegment>>) {
    let total: f64 = shares.iter().sum();
    let mut rng = rng_for(seed, 2);
    let mut metas = Vec::with_capacity(n);
    let mut roofs = BTreeMap::new();
    for i in 0..n {
        let id = format!("{prefix}{i:03}");
        let u: f64 = rng.gen();
        let category = if u < shares[0] / total {
            BuildingCategory::House
        } else if u < (shares[0] + shares[1]) / total {
            BuildingCategory::Apartment
        } else {
            BuildingCategory::NonResidential
        };
        let (area, floors) = match category {
            BuildingCategory::House => (rng.gen_range(120.0..280.0), 2.0),
            BuildingCategory::Apartment => (rng.gen_range(300.0..1500.0), rng.gen_range(3.0f64..6.0).floor()),
            BuildingCategory::NonResidential => (rng.gen_range(300.0..2000.0), rng.gen_range(1.0f64..3.0).floor()),
        };
        let era = ERAS[rng.gen_range(0..ERAS.len())];
        let footprint = area / floors;
        let azimuth: f64 = *[-90.0, -45.0, 0.0, 45.0, 90.0, 135.0].choose(&mut rng).expect("nonempty");
        let segments = match category {
            BuildingCategory::House => {
                let tilt: f64 = rng.gen_range(25.0..42.0);
                // Pitched roof with eaves: slope area exceeds the footprint.
                let half = 1.15 * footprint / tilt.to_radians().cos() / 2.0;
                let opposite = if azimuth > 0.0 { azimuth - 180.0 } else { azimuth + 180.0 };
                vec![RoofSegment::new(half, azimuth, tilt), RoofSegment::new(half, opposite, tilt)]
            }
            _ => vec![RoofSegment::new(0.7 * footprint, 0.0, rng.gen_range(5.0..15.0))],
        };
        metas.push(BuildingMeta {
            building_id: id.clone(),
            category,
            floor_area: area,
            era: era.to_string(),
        });
        roofs.insert(id, segments);
    }
    (metas, roofs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkKind {
    Rural,
    SemiUrban,
    Urban,
}

impl NetworkKind {
    pub const ALL: [NetworkKind; 3] = [NetworkKind::Rural, NetworkKind::SemiUrban, NetworkKind::Urban];

    pub fn as_str(&self) -> &'static str {
        match self {
            NetworkKind::Rural => "rural",
            NetworkKind::SemiUrban => "semi-urban",
            NetworkKind::Urban => "urban",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rural" => Ok(NetworkKind::Rural),
            "semi-urban" | "semiurban" => Ok(NetworkKind::SemiUrban),
            "urban" => Ok(NetworkKind::Urban),
            other => Err(Error::InvalidInput(format!("unknown network kind `{other}`"))),
        }
    }

    pub fn injection_points(&self) -> usize {
        match self {
            NetworkKind::Rural => 24,
            NetworkKind::SemiUrban => 37,
            NetworkKind::Urban => 33,
        }
    }

    pub fn buildings(&self) -> usize {
        match self {
            NetworkKind::Rural => 32,
            NetworkKind::SemiUrban => 71,
            NetworkKind::Urban => 65,
        }
    }

    pub fn transformer(&self) -> Transformer {
        let (s_rated, n_parallel, virtual_rating) = match self {
            NetworkKind::Rural => (630.0, 1, 630.0),
            NetworkKind::SemiUrban => (400.0, 2, 1000.0),
            NetworkKind::Urban => (630.0, 2, 1000.0),
        };
        Transformer {
            s_rated,
            n_parallel,
            lv_bus: "lv".into(),
            virtual_rating: Some(virtual_rating),
        }
    }

    /// Category shares `[house, apartment, non-residential]` typical of the area.
    pub fn category_shares(&self) -> [f64; 3] {
        match self {
            NetworkKind::Rural => [0.8, 0.15, 0.05],
            NetworkKind::SemiUrban => [0.55, 0.35, 0.1],
            NetworkKind::Urban => [0.25, 0.55, 0.2],
        }
    }

    fn feeders(&self) -> usize {
        match self {
            NetworkKind::Rural => 3,
            NetworkKind::SemiUrban => 5,
            NetworkKind::Urban => 6,
        }
    }

    /// Line length range, m.
    fn span(&self) -> (f64, f64) {
        match self {
            NetworkKind::Rural => (40.0, 200.0),
            NetworkKind::SemiUrban => (30.0, 120.0),
            NetworkKind::Urban => (15.0, 60.0),
        }
    }
}

/// (R Ω/km, X Ω/km, ampacity A) for trunk and branch cables.
const TRUNK: (f64, f64, f64) = (0.125, 0.07, 320.0);
const BRANCH: (f64, f64, f64) = (0.32, 0.075, 200.0);

/// A radial 400 V network with the kind's injection-point count. Buildings are spread
/// over the injection points in order.
pub fn synth_network(kind: NetworkKind, seed: u64, building_ids: &[String]) -> Result<Network> {
    let mut rng = rng_for(seed, 3 + kind as u64);
    let n_points = kind.injection_points();
    let mut buses = vec![Bus {
        id: "lv".into(),
        v_nominal: 400.0,
    }];
    let mut lines = Vec::new();
    let mut feeder_tail: Vec<Option<usize>> = vec![None; kind.feeders()];
    let mut feeder_members: Vec<Vec<usize>> = vec![Vec::new(); kind.feeders()];
    let (lo, hi) = kind.span();
    for p in 0..n_points {
        let f = p % kind.feeders();
        let bus = buses.len();
        buses.push(Bus {
            id: format!("n{p:02}"),
            v_nominal: 400.0,
        });
        let (parent, cable) = match feeder_tail[f] {
            None => (0, TRUNK),
            Some(tail) if rng.gen_bool(0.65) => (tail, TRUNK),
            Some(_) => (*feeder_members[f].choose(&mut rng).expect("feeder has members"), BRANCH),
        };
        if cable == TRUNK {
            feeder_tail[f] = Some(bus);
        }
        feeder_members[f].push(bus);
        let length = rng.gen_range(lo..hi);
        lines.push(Line {
            id: format!("l{p:02}"),
            from: buses[parent].id.clone(),
            to: buses[bus].id.clone(),
            r: cable.0 * length / 1000.0,
            x: cable.1 * length / 1000.0,
            ampacity: Some(cable.2),
            length,
        });
    }
    let injections = building_ids
        .iter()
        .enumerate()
        .map(|(i, b)| (b.clone(), format!("n{:02}", i * n_points / building_ids.len().max(1))))
        .collect();
    Network::from_file(NetworkFile {
        name: kind.as_str().into(),
        transformer: kind.transformer(),
        buses,
        lines,
        injections,
    })
}

/// Measured-looking transformer curve: the sum of building loads with a uniform growth
/// factor and 5 % step noise.
pub fn synth_transformer_curve(seed: u64, profiles: &[Vec<f64>], growth: f64) -> Vec<f64> {
    let mut rng = rng_for(seed, 9);
    let noise: Normal<f64> = Normal::new(1.0, 0.05).expect("valid normal");
    let n = profiles.first().map_or(0, Vec::len);
    (0..n)
        .map(|t| {
            let s: f64 = profiles.iter().map(|p| p[t]).sum();
            s * growth * noise.sample(&mut rng).max(0.5)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::DEFAULT_YEAR;

    #[test]
    fn networks_match_kind() {
        for kind in NetworkKind::ALL {
            let ids: Vec<String> = (0..kind.buildings()).map(|i| format!("b{i}")).collect();
            let net = synth_network(kind, 5, &ids).unwrap();
            assert_eq!(net.n_buses(), kind.injection_points() + 1);
            assert_eq!(net.injections.len(), kind.buildings());
            let used: std::collections::BTreeSet<&String> = net.injections.values().collect();
            assert_eq!(used.len(), kind.injection_points());
        }
    }

    #[test]
    fn weather_is_plausible() {
        let g = TimeGrid::year(DEFAULT_YEAR, 60).unwrap();
        let w = synth_weather(3, &g, DEFAULT_LATITUDE, DEFAULT_LONGITUDE);
        let annual: f64 = w.ghi.iter().sum::<f64>() / 1000.0;
        assert!((900.0..1500.0).contains(&annual), "{annual} kWh/m²");
        assert_eq!(w, synth_weather(3, &g, DEFAULT_LATITUDE, DEFAULT_LONGITUDE));
    }

    #[test]
    fn buildings_have_roofs() {
        let (m, r) = synth_buildings(1, 20, "b");
        assert_eq!(m.len(), 20);
        assert!(m.iter().all(|b| r[&b.building_id].iter().all(|s| s.validate().is_ok())));
    }
}
