//! Writes a complete synthetic input set plus a `scenario.toml` that references it.

use std::fs;
use std::path::{Path, PathBuf};

use crate::demand::{allocate_stage1, estimate_annual_energy, synth_profiles, CoefficientTable};
use crate::error::Result;
use crate::io::{write_buildings, write_library, write_roofs, write_series, write_weather};
use crate::scenario::{ConfigFile, NetworkEntry, PowerflowConfig};
use crate::synth::{
    synth_buildings_with, synth_network, synth_transformer_curve, synth_weather, NetworkKind, DEFAULT_LATITUDE,
    DEFAULT_LONGITUDE,
};
use crate::time::{TimeGrid, DEFAULT_STEP_MINUTES, DEFAULT_YEAR};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureOptions {
    pub seed: u64,
    /// Network kinds with their building counts.
    pub networks: Vec<(NetworkKind, usize)>,
    pub profiles_per_category: usize,
    pub days: Option<u32>,
    pub tariffs: Option<Vec<String>>,
    /// Write a measured-looking transformer curve instead of leaving it to the run.
    pub transformer_curves: bool,
    pub hosting_capacity: bool,
}

impl Default for FixtureOptions {
    /// The desk-scale fleet: eight buildings on a rural feeder, four weeks.
    fn default() -> Self {
        FixtureOptions {
            seed: 7,
            networks: vec![(NetworkKind::Rural, 8)],
            profiles_per_category: 3,
            days: Some(28),
            tariffs: None,
            transformer_curves: true,
            hosting_capacity: false,
        }
    }
}

/// Generates full-year inputs at 15-minute resolution under `dir` and returns the path
/// of the scenario config.
pub fn write_fixture(dir: &Path, opts: &FixtureOptions) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let year = TimeGrid::year(DEFAULT_YEAR, DEFAULT_STEP_MINUTES)?;
    let ts = year.timestamps();

    let w = synth_weather(opts.seed, &year, DEFAULT_LATITUDE, DEFAULT_LONGITUDE);
    write_weather(&dir.join("weather.csv"), ts, &w.ghi, &w.ambient_temp)?;
    let (library, population) = synth_profiles(opts.seed, opts.profiles_per_category, &year)?;
    write_library(&dir.join("library.csv"), &dir.join("library_meta.csv"), ts, &library)?;
    write_series(&dir.join("aggregate_load.csv"), ts, &[("kw", &expected_load(&population, 4))])?;

    let coefficients = CoefficientTable::default();
    let mut entries = Vec::new();
    for (k, (kind, n)) in opts.networks.iter().enumerate() {
        let name = kind.as_str();
        let seed = opts.seed.wrapping_add(1000 * (k as u64 + 1));
        let (metas, roofs) = synth_buildings_with(seed, *n, &format!("{name}-"), kind.category_shares());
        let ids: Vec<String> = metas.iter().map(|m| m.building_id.clone()).collect();
        let net = synth_network(*kind, seed, &ids)?;
        fs::write(dir.join(format!("{name}.toml")), net.to_toml())?;
        write_buildings(&dir.join(format!("{name}_buildings.csv")), &metas)?;
        write_roofs(&dir.join(format!("{name}_roofs.csv")), &roofs)?;
        let transformer_curve = if opts.transformer_curves {
            let with_energy = metas
                .iter()
                .map(|m| Ok((m.clone(), estimate_annual_energy(m, &coefficients)?)))
                .collect::<Result<Vec<_>>>()?;
            let stage1 = allocate_stage1(&with_energy, &library, year.step_hours())?;
            let curve = synth_transformer_curve(seed, &stage1, 1.0);
            let file = format!("{name}_transformer.csv");
            write_series(&dir.join(&file), ts, &[("kw", &curve)])?;
            Some(PathBuf::from(file))
        } else {
            None
        };
        entries.push(NetworkEntry {
            name: Some(name.into()),
            file: Some(format!("{name}.toml").into()),
            buildings: Some(format!("{name}_buildings.csv").into()),
            roofs: Some(format!("{name}_roofs.csv").into()),
            library: Some("library.csv".into()),
            library_meta: Some("library_meta.csv".into()),
            transformer_curve,
        });
    }

    let config = ConfigFile {
        seed: Some(opts.seed),
        days: opts.days,
        weather: Some("weather.csv".into()),
        aggregate_load: Some("aggregate_load.csv".into()),
        tariffs: opts.tariffs.clone(),
        out: Some("out".into()),
        powerflow: PowerflowConfig {
            hosting_capacity: opts.hosting_capacity,
            ..Default::default()
        },
        networks: entries,
        ..Default::default()
    };
    let path = dir.join("scenario.toml");
    let text = toml::to_string(&config).map_err(|e| crate::Error::Config(e.to_string()))?;
    fs::write(&path, text)?;
    Ok(path)
}

/// Centred moving average over `2 * half + 1` steps: a forecast-like expected load.
fn expected_load(load: &[f64], half: usize) -> Vec<f64> {
    (0..load.len())
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(load.len());
            load[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}
