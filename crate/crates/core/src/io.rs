//! CSV formats for inputs and per-building outputs.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::demand::{BuildingCategory, BuildingMeta, ReferenceLibrary, ReferenceProfile};
use crate::design::SystemDesign;
use crate::error::{Error, Result};
use crate::pv::RoofSegment;
use crate::tariff::BillBreakdown;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M";

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
        .map_err(|e| Error::InvalidInput(format!("bad timestamp `{s}`: {e}")))
}

/// Columns of a timestamped table.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    pub timestamps: Vec<NaiveDateTime>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl SeriesTable {
    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::InvalidInput(format!("missing column `{name}`")))
    }

    /// Spacing of the timestamps in minutes.
    pub fn step_minutes(&self) -> Result<u32> {
        match self.timestamps.as_slice() {
            [a, b, ..] => Ok((*b - *a).num_minutes() as u32),
            _ => Err(Error::InvalidInput("series needs at least two rows".into())),
        }
    }
}

pub fn write_series(path: &Path, timestamps: &[NaiveDateTime], columns: &[(&str, &[f64])]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["timestamp"];
    header.extend(columns.iter().map(|c| c.0));
    w.write_record(&header)?;
    for (t, ts) in timestamps.iter().enumerate() {
        let mut row = vec![format_timestamp(ts)];
        for (name, col) in columns {
            let v = col.get(t).ok_or(Error::LengthMismatch {
                what: "series column",
                expected: timestamps.len(),
                actual: col.len(),
            });
            let v = v.map_err(|e| Error::InvalidInput(format!("column {name}: {e}")))?;
            row.push(v.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series(path: &Path) -> Result<SeriesTable> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("timestamp") {
        return Err(Error::InvalidInput(format!(
            "{}: first column must be `timestamp`",
            path.display()
        )));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut timestamps = Vec::new();
    let mut columns = vec![Vec::new(); names.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        timestamps.push(parse_timestamp(&rec[0])?);
        for (c, col) in columns.iter_mut().enumerate() {
            let field = rec.get(c + 1).unwrap_or("");
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::InvalidInput(format!(
                    "{} row {}: `{field}` in column {} is not a number",
                    path.display(),
                    line + 2,
                    names[c]
                ))
            })?;
            col.push(v);
        }
    }
    Ok(SeriesTable {
        timestamps,
        names,
        columns,
    })
}

/// Weather columns: timestamp, ghi_w_m2, temp_c.
pub fn read_weather(path: &Path) -> Result<SeriesTable> {
    let t = read_series(path)?;
    t.column("ghi_w_m2")?;
    t.column("temp_c")?;
    Ok(t)
}

pub fn write_weather(path: &Path, timestamps: &[NaiveDateTime], ghi: &[f64], temp: &[f64]) -> Result<()> {
    write_series(path, timestamps, &[("ghi_w_m2", ghi), ("temp_c", temp)])
}

#[derive(Debug, Serialize, Deserialize)]
struct RoofRecord {
    building_id: String,
    segment_id: String,
    area_m2: f64,
    azimuth_deg: f64,
    tilt_deg: f64,
}

pub fn read_roofs(path: &Path) -> Result<BTreeMap<String, Vec<RoofSegment>>> {
    let mut out: BTreeMap<String, Vec<RoofSegment>> = BTreeMap::new();
    for rec in csv::Reader::from_path(path)?.deserialize() {
        let r: RoofRecord = rec?;
        let seg = RoofSegment::new(r.area_m2, r.azimuth_deg, r.tilt_deg);
        seg.validate()
            .map_err(|e| Error::InvalidInput(format!("roof {}/{}: {e}", r.building_id, r.segment_id)))?;
        out.entry(r.building_id).or_default().push(seg);
    }
    Ok(out)
}

pub fn write_roofs(path: &Path, roofs: &BTreeMap<String, Vec<RoofSegment>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (b, segs) in roofs {
        for (i, s) in segs.iter().enumerate() {
            w.serialize(RoofRecord {
                building_id: b.clone(),
                segment_id: format!("s{i}"),
                area_m2: s.area,
                azimuth_deg: s.azimuth,
                tilt_deg: s.tilt,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct BuildingRecord {
    building_id: String,
    category: String,
    floor_area_m2: f64,
    era: String,
}

pub fn read_buildings(path: &Path) -> Result<Vec<BuildingMeta>> {
    let mut out = Vec::new();
    for rec in csv::Reader::from_path(path)?.deserialize() {
        let r: BuildingRecord = rec?;
        out.push(BuildingMeta {
            category: BuildingCategory::parse(&r.category)?,
            building_id: r.building_id,
            floor_area: r.floor_area_m2,
            era: r.era,
        });
    }
    Ok(out)
}

pub fn write_buildings(path: &Path, buildings: &[BuildingMeta]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for b in buildings {
        w.serialize(BuildingRecord {
            building_id: b.building_id.clone(),
            category: b.category.as_str().into(),
            floor_area_m2: b.floor_area,
            era: b.era.clone(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Transformer curve columns: timestamp, kw.
pub fn read_transformer_curve(path: &Path) -> Result<SeriesTable> {
    let t = read_series(path)?;
    t.column("kw")?;
    Ok(t)
}

#[derive(Debug, Serialize, Deserialize)]
struct LibraryRecord {
    profile_id: String,
    category: String,
    reference_annual_kwh: f64,
}

/// A library is stored as a wide shape table plus a metadata table next to it
/// (`<name>.csv` and `<name>_meta.csv`).
pub fn write_library(shapes: &Path, meta: &Path, timestamps: &[NaiveDateTime], lib: &ReferenceLibrary) -> Result<()> {
    let cols: Vec<(&str, &[f64])> = lib
        .profiles
        .iter()
        .map(|p| (p.id.as_str(), p.shape.as_slice()))
        .collect();
    write_series(shapes, timestamps, &cols)?;
    let mut w = csv::Writer::from_path(meta)?;
    for p in &lib.profiles {
        w.serialize(LibraryRecord {
            profile_id: p.id.clone(),
            category: p.category.as_str().into(),
            reference_annual_kwh: p.reference_annual_kwh,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a library; shapes are returned as stored (full-year, normalised).
pub fn read_library(shapes: &Path, meta: &Path) -> Result<(SeriesTable, ReferenceLibrary)> {
    let table = read_series(shapes)?;
    let mut profiles = Vec::new();
    for rec in csv::Reader::from_path(meta)?.deserialize() {
        let r: LibraryRecord = rec?;
        profiles.push(ReferenceProfile {
            shape: table.column(&r.profile_id)?.to_vec(),
            category: BuildingCategory::parse(&r.category)?,
            id: r.profile_id,
            reference_annual_kwh: r.reference_annual_kwh,
        });
    }
    Ok((table, ReferenceLibrary { profiles }))
}

pub fn write_profiles(path: &Path, timestamps: &[NaiveDateTime], ids: &[String], profiles: &[Vec<f64>]) -> Result<()> {
    let cols: Vec<(&str, &[f64])> = ids.iter().map(String::as_str).zip(profiles.iter().map(Vec::as_slice)).collect();
    write_series(path, timestamps, &cols)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub pv_kw: f64,
    pub batt_kwh: f64,
    pub tco: f64,
    pub optimal: bool,
}

/// Dispatch table plus a `.json` sidecar with sizes and TCO.
pub fn write_design(path: &Path, timestamps: &[NaiveDateTime], d: &SystemDesign) -> Result<()> {
    write_series(
        path,
        timestamps,
        &[
            ("import", &d.import),
            ("export", &d.export),
            ("pv_to_load", &d.pv_to_load),
            ("pv_to_batt", &d.pv_to_batt),
            ("batt_to_load", &d.batt_to_load),
            ("soc", &d.soc),
            ("load", &d.load),
            ("pv_gen", &d.pv_gen),
        ],
    )?;
    let summary = DesignSummary {
        pv_kw: d.pv_capacity,
        batt_kwh: d.battery_capacity,
        tco: d.tco,
        optimal: d.optimal,
    };
    std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

pub fn read_design(path: &Path) -> Result<SystemDesign> {
    let t = read_series(path)?;
    let summary: DesignSummary = serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
    let col = |n: &str| t.column(n).map(<[f64]>::to_vec);
    Ok(SystemDesign {
        pv_capacity: summary.pv_kw,
        battery_capacity: summary.batt_kwh,
        import: col("import")?,
        export: col("export")?,
        pv_to_load: col("pv_to_load")?,
        pv_to_batt: col("pv_to_batt")?,
        batt_to_load: col("batt_to_load")?,
        soc: col("soc")?,
        load: col("load")?,
        pv_gen: col("pv_gen")?,
        tco: summary.tco,
        optimal: summary.optimal,
    })
}

#[derive(Debug, Serialize)]
struct BillRecord<'a> {
    building_id: &'a str,
    tariff: &'a str,
    volumetric_import: f64,
    export_credit: f64,
    capacity_charge: f64,
    grid_portion: f64,
    total: f64,
}

pub fn write_bills(path: &Path, rows: &[(String, String, BillBreakdown)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (b, t, bill) in rows {
        w.serialize(BillRecord {
            building_id: b,
            tariff: t,
            volumetric_import: bill.volumetric_import,
            export_credit: bill.export_credit,
            capacity_charge: bill.capacity_charge,
            grid_portion: bill.grid_portion,
            total: bill.total,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::{TimeGrid, DEFAULT_YEAR};

    #[test]
    fn design_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = TimeGrid::from_blocks(DEFAULT_YEAR, 60, &[(3, 1)]).unwrap();
        let mut d = SystemDesign::grid_only(&vec![1.25; 24]);
        d.tco = 12.5;
        let p = dir.path().join("d.csv");
        write_design(&p, g.timestamps(), &d).unwrap();
        assert_eq!(read_design(&p).unwrap(), d);
    }

    #[test]
    fn buildings_and_roofs() {
        let dir = tempfile::tempdir().unwrap();
        let b = vec![BuildingMeta {
            building_id: "b1".into(),
            category: BuildingCategory::NonResidential,
            floor_area: 420.0,
            era: "post2000".into(),
        }];
        let p = dir.path().join("b.csv");
        write_buildings(&p, &b).unwrap();
        assert_eq!(read_buildings(&p).unwrap(), b);
        let roofs = BTreeMap::from([("b1".to_string(), vec![RoofSegment::new(50.0, -90.0, 30.0)])]);
        let p = dir.path().join("r.csv");
        write_roofs(&p, &roofs).unwrap();
        assert_eq!(read_roofs(&p).unwrap(), roofs);
    }

    #[test]
    fn bad_number_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        std::fs::write(&p, "timestamp,ghi_w_m2,temp_c\n2025-01-01 00:00,0,x\n").unwrap();
        let msg = read_weather(&p).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("temp_c"), "{msg}");
    }
}
