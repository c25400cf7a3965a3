//! Rooftop PV: isotropic-sky transposition and an efficiency-based output model.

use chrono::{Datelike, Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{hour_of_day, TimeGrid};

const SOLAR_CONSTANT: f64 = 1367.0;
/// Below this cos(zenith) all irradiance is treated as diffuse.
const MIN_COS_ZENITH: f64 = 0.065;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoofSegment {
    pub area: f64,
    /// Degrees from south, east negative.
    pub azimuth: f64,
    /// Degrees from horizontal.
    pub tilt: f64,
    /// kW per m² of roof.
    pub packing_density: f64,
}

impl RoofSegment {
    pub const DEFAULT_PACKING_DENSITY: f64 = 0.19;

    pub fn new(area: f64, azimuth: f64, tilt: f64) -> Self {
        RoofSegment {
            area,
            azimuth,
            tilt,
            packing_density: Self::DEFAULT_PACKING_DENSITY,
        }
    }

    pub fn capacity(&self) -> f64 {
        self.area * self.packing_density
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area > 0.0)
            || !(0.0..=90.0).contains(&self.tilt)
            || !(-180.0..=180.0).contains(&self.azimuth)
            || !(self.packing_density > 0.0)
        {
            return Err(Error::InvalidInput(format!("invalid roof segment {self:?}")));
        }
        Ok(())
    }
}

/// Weather on the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherYear {
    /// Global horizontal irradiance, W/m²
    pub ghi: Vec<f64>,
    /// Ambient temperature, °C
    pub ambient_temp: Vec<f64>,
    pub latitude: f64,
    pub longitude: f64,
}

impl WeatherYear {
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        for (what, s) in [("ghi", &self.ghi), ("ambient temperature", &self.ambient_temp)] {
            if s.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    what,
                    expected: grid.len(),
                    actual: s.len(),
                });
            }
        }
        if let Some(index) = self.ghi.iter().position(|g| *g < 0.0 || !g.is_finite()) {
            return Err(Error::NegativeValue {
                what: "ghi",
                index,
                value: self.ghi[index],
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarPosition {
    pub cos_zenith: f64,
    /// Radians from south, east negative.
    pub azimuth: f64,
    /// Extraterrestrial normal irradiance, W/m².
    pub extraterrestrial: f64,
}

impl SolarPosition {
    /// Sun position at local standard time `ts` (fixed UTC offset in hours).
    pub fn at(ts: &NaiveDateTime, latitude: f64, longitude: f64, utc_offset: f64) -> Self {
        let n = ts.ordinal() as f64;
        let b = 2.0 * std::f64::consts::PI * (n - 1.0) / 365.0;
        let eot = 229.18
            * (0.000075 + 0.001868 * b.cos()
                - 0.032077 * b.sin()
                - 0.014615 * (2.0 * b).cos()
                - 0.04089 * (2.0 * b).sin());
        let decl = 0.006918 - 0.399912 * b.cos() + 0.070257 * b.sin()
            - 0.006758 * (2.0 * b).cos()
            + 0.000907 * (2.0 * b).sin()
            - 0.002697 * (3.0 * b).cos()
            + 0.00148 * (3.0 * b).sin();
        let solar_time = hour_of_day(ts) + (4.0 * (longitude - 15.0 * utc_offset) + eot) / 60.0;
        let omega = (15.0 * (solar_time - 12.0)).to_radians();
        let phi = latitude.to_radians();
        let cos_z = (phi.sin() * decl.sin() + phi.cos() * decl.cos() * omega.cos()).clamp(-1.0, 1.0);
        let sin_z = (1.0 - cos_z * cos_z).sqrt();
        let azimuth = if sin_z * phi.cos() > 1e-12 {
            let c = ((cos_z * phi.sin() - decl.sin()) / (sin_z * phi.cos())).clamp(-1.0, 1.0);
            omega.signum() * c.acos()
        } else {
            0.0
        };
        let extraterrestrial =
            SOLAR_CONSTANT * (1.0 + 0.033 * (2.0 * std::f64::consts::PI * n / 365.0).cos());
        SolarPosition {
            cos_zenith: cos_z,
            azimuth,
            extraterrestrial,
        }
    }

    /// Cosine of the incidence angle on a plane (degrees), not clipped.
    pub fn cos_incidence(&self, tilt: f64, azimuth: f64) -> f64 {
        let beta = tilt.to_radians();
        let sin_z = (1.0 - self.cos_zenith * self.cos_zenith).max(0.0).sqrt();
        self.cos_zenith * beta.cos()
            + sin_z * beta.sin() * (self.azimuth - azimuth.to_radians()).cos()
    }
}

/// Diffuse fraction of global irradiance from the clearness index (Erbs correlation).
pub fn diffuse_fraction(kt: f64) -> f64 {
    if kt <= 0.22 {
        1.0 - 0.09 * kt
    } else if kt <= 0.8 {
        0.9511 - 0.1604 * kt + 4.388 * kt.powi(2) - 16.638 * kt.powi(3) + 12.336 * kt.powi(4)
    } else {
        0.165
    }
}

/// Plane-of-array irradiance for one step.
pub fn transpose_step(ghi: f64, sun: &SolarPosition, segment: &RoofSegment, albedo: f64) -> f64 {
    if ghi <= 0.0 {
        return 0.0;
    }
    if segment.tilt == 0.0 {
        return ghi;
    }
    let (beam_h, diffuse) = if sun.cos_zenith < MIN_COS_ZENITH {
        (0.0, ghi)
    } else {
        let kt = (ghi / (sun.extraterrestrial * sun.cos_zenith)).clamp(0.0, 1.0);
        let d = ghi * diffuse_fraction(kt);
        (ghi - d, d)
    };
    let beta = segment.tilt.to_radians();
    let cos_i = sun.cos_incidence(segment.tilt, segment.azimuth).max(0.0);
    let beam = if beam_h > 0.0 {
        beam_h * cos_i / sun.cos_zenith
    } else {
        0.0
    };
    let sky = diffuse * (1.0 + beta.cos()) / 2.0;
    let ground = ghi * albedo * (1.0 - beta.cos()) / 2.0;
    (beam + sky + ground).max(0.0)
}

fn step_midpoints(grid: &TimeGrid) -> impl Iterator<Item = NaiveDateTime> + '_ {
    let half = Duration::seconds(grid.step_minutes() as i64 * 30);
    grid.timestamps().iter().map(move |t| *t + half)
}

/// Plane-of-array irradiance series (W/m²) for one roof segment.
pub fn transpose_irradiance(
    weather: &WeatherYear,
    grid: &TimeGrid,
    segment: &RoofSegment,
    albedo: f64,
) -> Result<Vec<f64>> {
    weather.validate(grid)?;
    segment.validate()?;
    Ok(step_midpoints(grid)
        .zip(&weather.ghi)
        .map(|(ts, &ghi)| {
            let sun = SolarPosition::at(&ts, weather.latitude, weather.longitude, grid.utc_offset_hours());
            transpose_step(ghi, &sun, segment, albedo)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvParams {
    /// Output per kWp per W/m² of plane-of-array irradiance (1/1000 at STC).
    pub stc_efficiency_scale: f64,
    /// Relative power change per °C of cell temperature above 25 °C.
    pub temp_coefficient: f64,
    /// Nominal operating cell temperature, °C.
    pub noct: f64,
    pub albedo: f64,
    /// Upper clip of the per-kWp output.
    pub max_output: f64,
}

impl Default for PvParams {
    fn default() -> Self {
        PvParams {
            stc_efficiency_scale: 1.0 / 1000.0,
            temp_coefficient: -0.0035,
            noct: 45.0,
            albedo: 0.2,
            max_output: 1.05,
        }
    }
}

impl PvParams {
    /// Per-kWp output for one step.
    pub fn output(&self, poa: f64, ambient: f64) -> f64 {
        let cell = ambient + (self.noct - 20.0) / 800.0 * poa;
        let p = poa * self.stc_efficiency_scale * (1.0 + self.temp_coefficient * (cell - 25.0));
        p.clamp(0.0, self.max_output)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvProfile {
    /// kW per kWp installed, per step
    pub per_kw: Vec<f64>,
    /// kWp installable on all segments
    pub max_capacity: f64,
}

impl PvProfile {
    /// Specific yield over the grid, kWh/kWp.
    pub fn annual_yield(&self, step_hours: f64) -> f64 {
        self.per_kw.iter().sum::<f64>() * step_hours
    }

    pub fn output(&self, capacity: f64) -> Vec<f64> {
        self.per_kw.iter().map(|p| p * capacity).collect()
    }

    pub fn check_yield(&self, grid: &TimeGrid, band: (f64, f64)) -> Result<f64> {
        let y = self.annual_yield(grid.step_hours()) / grid.year_fraction();
        if y < band.0 || y > band.1 {
            return Err(Error::InvalidInput(format!(
                "annualised PV yield {y:.1} kWh/kWp outside [{}, {}]",
                band.0, band.1
            )));
        }
        Ok(y)
    }
}

/// Capacity-weighted per-kWp profile across roof segments.
pub fn pv_profile(
    weather: &WeatherYear,
    grid: &TimeGrid,
    segments: &[RoofSegment],
    params: &PvParams,
) -> Result<PvProfile> {
    if segments.is_empty() {
        return Err(Error::InvalidInput("building has no roof segments".into()));
    }
    let max_capacity: f64 = segments.iter().map(RoofSegment::capacity).sum();
    let mut acc = vec![0.0; grid.len()];
    for seg in segments {
        let poa = transpose_irradiance(weather, grid, seg, params.albedo)?;
        let cap = seg.capacity();
        for ((a, g), temp) in acc.iter_mut().zip(&poa).zip(&weather.ambient_temp) {
            *a += cap * params.output(*g, *temp);
        }
    }
    let per_kw = acc.into_iter().map(|a| a / max_capacity).collect();
    Ok(PvProfile {
        per_kw,
        max_capacity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::DEFAULT_YEAR;
    use chrono::NaiveDate;

    fn weather(grid: &TimeGrid, ghi: f64) -> WeatherYear {
        WeatherYear {
            ghi: vec![ghi; grid.len()],
            ambient_temp: vec![15.0; grid.len()],
            latitude: 46.52,
            longitude: 6.66,
        }
    }

    #[test]
    fn horizontal_plane_is_identity() {
        let g = TimeGrid::representative_days(DEFAULT_YEAR, 60, 7).unwrap();
        let mut w = weather(&g, 0.0);
        for (t, v) in w.ghi.iter_mut().enumerate() {
            *v = (t % 24) as f64 * 37.0;
        }
        let out = transpose_irradiance(&w, &g, &RoofSegment::new(10.0, 30.0, 0.0), 0.2).unwrap();
        assert_eq!(out, w.ghi);
        let dark = transpose_irradiance(&weather(&g, 0.0), &g, &RoofSegment::new(10.0, 0.0, 35.0), 0.2).unwrap();
        assert!(dark.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn equinox_noon_on_latitude_tilt() {
        let lat: f64 = 46.52;
        let lon = 6.66;
        // solar noon at the equinox: clock noon shifted by longitude and equation of time
        let day = NaiveDate::from_ymd_opt(DEFAULT_YEAR, 3, 20).unwrap();
        let mut best = (f64::MIN, day.and_hms_opt(12, 0, 0).unwrap());
        for m in 0..(4 * 60) {
            let ts = day.and_hms_opt(10, 0, 0).unwrap() + Duration::minutes(m);
            let s = SolarPosition::at(&ts, lat, lon, 1.0);
            if s.cos_zenith > best.0 {
                best = (s.cos_zenith, ts);
            }
        }
        let sun = SolarPosition::at(&best.1, lat, lon, 1.0);
        // hand geometry: zenith at equinox noon ≈ latitude
        let zenith = sun.cos_zenith.acos().to_degrees();
        assert!((zenith - lat).abs() < 0.6, "zenith {zenith}");
        // incidence on a latitude-tilted south plane is almost normal
        assert!(sun.cos_incidence(lat, 0.0) > 0.999);
        let ghi = 650.0;
        let poa = transpose_step(ghi, &sun, &RoofSegment::new(1.0, 0.0, lat), 0.2);
        assert!(poa >= ghi, "poa {poa} < ghi {ghi}");
    }

    #[test]
    fn empty_segments_rejected() {
        let g = TimeGrid::representative_days(DEFAULT_YEAR, 60, 7).unwrap();
        assert!(pv_profile(&weather(&g, 100.0), &g, &[], &PvParams::default()).is_err());
    }

    #[test]
    fn duplicated_segment_equals_doubled_area() {
        let g = TimeGrid::representative_days(DEFAULT_YEAR, 60, 14).unwrap();
        let mut w = weather(&g, 0.0);
        for (t, v) in w.ghi.iter_mut().enumerate() {
            let h = (t % 24) as f64;
            *v = (800.0 * ((h - 6.0) / 12.0 * std::f64::consts::PI).sin()).max(0.0);
        }
        let seg = RoofSegment::new(20.0, -20.0, 30.0);
        let two = pv_profile(&w, &g, &[seg, seg], &PvParams::default()).unwrap();
        let one = pv_profile(&w, &g, &[RoofSegment { area: 40.0, ..seg }], &PvParams::default()).unwrap();
        assert_eq!(two.per_kw, one.per_kw);
        assert_eq!(two.max_capacity, one.max_capacity);
        assert!((one.max_capacity - 40.0 * 0.19).abs() < 1e-12);
        assert!(one.per_kw.iter().all(|p| (0.0..=1.05).contains(p)));
    }
}
