//! Configured end-to-end runs: demand allocation, PV profiles, tariff calibration,
//! per-building optimization, power flow and report emission.
//!
//! Every stage stores its artifact under `<out>/cache/`, keyed by a hash of its inputs
//! (file contents, upstream keys and parameters), so a rerun with unchanged inputs
//! reads everything back instead of recomputing.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::demand::{allocate_stage1, estimate_annual_energy, reconcile_stage2, CoefficientTable};
use crate::design::{BatteryParams, SystemDesign};
use crate::error::{Error, Result};
use crate::io::{read_buildings, read_library, read_roofs, read_transformer_curve, read_weather, write_design, write_profiles, SeriesTable};
use crate::kpi::building_kpi;
use crate::network::{
    hosting_capacity, load_network, overload_events_in, run_timeseries, voltage_line_stats, HostingOptions, Network,
    OverloadCurve, SweepOptions, VoltageLimits,
};
use crate::optimizer::{formulate_program, solve_design, BuildingInput, CostModel, SolverOptions};
use crate::pv::{pv_profile, PvParams, PvProfile, WeatherYear};
use crate::report::{emit_report, CalibrationRecord, CellResult, HostingRecord, PowerflowSummary, ScenarioResults};
use crate::synth::{synth_transformer_curve, DEFAULT_LATITUDE, DEFAULT_LONGITUDE};
use crate::tariff::{
    average_specs, bill, build_schedule, calibrate, canonical_name, fleet_revenue, CalibrationContext, TariffFile,
    TariffSpec, PRESET_NAMES,
};
use crate::time::{days_in_year, TimeGrid, DEFAULT_STEP_MINUTES, DEFAULT_YEAR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub time_limit_s: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-9,
            time_limit_s: None,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.tolerance,
            time_limit: self.time_limit_s.map(Duration::from_secs_f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub enabled: bool,
    /// Tariffs whose mean revenue is the calibration target.
    pub references: Vec<String>,
    /// Use one set of coefficients per tariff, averaged over the networks.
    pub average_across_networks: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            enabled: true,
            references: vec!["ft-reference".into(), "dt-reference".into()],
            average_across_networks: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerflowConfig {
    pub enabled: bool,
    pub use_virtual_rating: bool,
    pub overload_curve: OverloadCurve,
    pub voltage: VoltageLimits,
    pub sweep: SweepOptions,
    pub hosting_capacity: bool,
    pub hosting_search_cap: f64,
    pub hosting_tolerance: f64,
}

impl Default for PowerflowConfig {
    fn default() -> Self {
        PowerflowConfig {
            enabled: true,
            use_virtual_rating: false,
            overload_curve: OverloadCurve::default(),
            voltage: VoltageLimits::default(),
            sweep: SweepOptions::default(),
            hosting_capacity: false,
            hosting_search_cap: 100.0,
            hosting_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write the reconciled building loads per network.
    pub profiles: bool,
    /// Write every building's dispatch per tariff.
    pub designs: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            profiles: true,
            designs: false,
        }
    }
}

/// One `[[network]]` table as written. Paths are relative to the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkEntry {
    pub name: Option<String>,
    pub file: Option<PathBuf>,
    pub buildings: Option<PathBuf>,
    pub roofs: Option<PathBuf>,
    /// Reference shapes; metadata defaults to `<stem>_meta.csv` next to it.
    pub library: Option<PathBuf>,
    pub library_meta: Option<PathBuf>,
    /// Measured transformer load; synthesized from the seed when absent.
    pub transformer_curve: Option<PathBuf>,
}

/// The config file as written, before validation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub year: Option<i32>,
    /// Shorten the horizon to this many representative days.
    pub days: Option<u32>,
    pub step_minutes: Option<u32>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub weather: Option<PathBuf>,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub tariffs: Option<Vec<String>>,
    pub tariff_file: Option<PathBuf>,
    /// Expected utility-wide load (timestamp, kw) driving the dynamic price.
    pub aggregate_load: Option<PathBuf>,
    /// kWh/m²/yr by category and era.
    pub coefficients: Option<BTreeMap<String, BTreeMap<String, f64>>>,
    #[serde(default)]
    pub costs: CostModel,
    #[serde(default)]
    pub battery: BatteryParams,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub powerflow: PowerflowConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, rename = "network")]
    pub networks: Vec<NetworkEntry>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tariffs: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub days: Option<u32>,
    /// Resolved against the working directory, not the config file.
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub name: String,
    pub file: PathBuf,
    pub buildings: PathBuf,
    pub roofs: PathBuf,
    pub library: PathBuf,
    pub library_meta: PathBuf,
    pub transformer_curve: Option<PathBuf>,
}

/// A fully resolved scenario: every path exists and every tariff is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: Option<u64>,
    pub year: i32,
    pub days: Option<u32>,
    pub step_minutes: u32,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    pub weather: PathBuf,
    pub latitude: f64,
    pub longitude: f64,
    pub aggregate_load: Option<PathBuf>,
    pub tariffs: Vec<TariffSpec>,
    pub references: Vec<TariffSpec>,
    pub coefficients: CoefficientTable,
    pub costs: CostModel,
    pub battery: BatteryParams,
    pub solver: SolverConfig,
    pub calibration: CalibrationConfig,
    pub powerflow: PowerflowConfig,
    pub output: OutputConfig,
    pub networks: Vec<NetworkConfig>,
}

impl ScenarioConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        match self.days {
            Some(d) => TimeGrid::representative_days(self.year, self.step_minutes, d),
            None => TimeGrid::year(self.year, self.step_minutes),
        }
    }

    /// Requested tariffs, then any reference tariff not among them.
    pub fn run_order(&self) -> Vec<&TariffSpec> {
        let mut out: Vec<&TariffSpec> = Vec::new();
        for s in self.tariffs.iter().chain(&self.references) {
            if !out.iter().any(|o| o.name == s.name) {
                out.push(s);
            }
        }
        out
    }
}

pub fn validate_config(path: &Path) -> std::result::Result<ScenarioConfig, Vec<String>> {
    validate_config_with(path, &Overrides::default())
}

/// Parses and checks a config file, returning every problem found rather than the first.
pub fn validate_config_with(path: &Path, overrides: &Overrides) -> std::result::Result<ScenarioConfig, Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
    let file: ConfigFile = toml::from_str(&text).map_err(|e| vec![format!("{}: {e}", path.display())])?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    resolve_config(file, &dir, overrides)
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

fn existing(dir: &Path, field: &str, p: &Option<PathBuf>, errs: &mut Vec<String>) -> Option<PathBuf> {
    match p {
        None => {
            errs.push(format!("{field}: missing required field"));
            None
        }
        Some(p) => {
            let r = resolve(dir, p);
            if r.is_file() {
                Some(r)
            } else {
                errs.push(format!("{field}: file not found: {}", r.display()));
                None
            }
        }
    }
}

pub fn resolve_config(
    mut file: ConfigFile,
    dir: &Path,
    overrides: &Overrides,
) -> std::result::Result<ScenarioConfig, Vec<String>> {
    let mut errs = Vec::new();
    if let Some(t) = &overrides.tariffs {
        file.tariffs = Some(t.clone());
    }
    file.seed = overrides.seed.or(file.seed);
    file.days = overrides.days.or(file.days);
    file.jobs = overrides.jobs.or(file.jobs);
    let out = match (&overrides.out, &file.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => resolve(dir, o),
        (None, None) => dir.join("out"),
    };

    let year = file.year.unwrap_or(DEFAULT_YEAR);
    let step_minutes = file.step_minutes.unwrap_or(DEFAULT_STEP_MINUTES);
    if let Err(e) = TimeGrid::year(year, step_minutes) {
        errs.push(format!("step_minutes: {e}"));
    }
    if let Some(d) = file.days {
        if d == 0 || d > days_in_year(year) {
            errs.push(format!("days: must lie in 1..={}, got {d}", days_in_year(year)));
        }
    }
    if file.jobs == Some(0) {
        errs.push("jobs: must be at least 1".into());
    }
    let weather = existing(dir, "weather", &file.weather, &mut errs);
    let aggregate_load = match &file.aggregate_load {
        Some(_) => existing(dir, "aggregate_load", &file.aggregate_load, &mut errs),
        None => None,
    };
    let latitude = file.latitude.unwrap_or(DEFAULT_LATITUDE);
    let longitude = file.longitude.unwrap_or(DEFAULT_LONGITUDE);
    if !(-90.0..=90.0).contains(&latitude) {
        errs.push(format!("latitude: {latitude} outside [-90, 90]"));
    }

    let mut custom = Vec::new();
    if file.tariff_file.is_some() {
        if let Some(p) = existing(dir, "tariff_file", &file.tariff_file, &mut errs) {
            match fs::read_to_string(&p)
                .map_err(Error::from)
                .and_then(|t| TariffFile::parse(&t))
                .and_then(|f| f.specs())
            {
                Ok(specs) => custom = specs,
                Err(e) => errs.push(format!("tariff_file: {e}")),
            }
        }
    }
    let lookup = |name: &str| -> Result<TariffSpec> {
        let c = canonical_name(name);
        match custom.iter().find(|s| canonical_name(&s.name) == c) {
            Some(s) => Ok(s.clone()),
            None => TariffSpec::preset(name),
        }
    };
    let names: Vec<String> = match &file.tariffs {
        Some(t) => t.clone(),
        None => PRESET_NAMES
            .iter()
            .map(|s| s.to_string())
            .chain(custom.iter().map(|s| s.name.clone()))
            .collect(),
    };
    if names.is_empty() {
        errs.push("tariffs: list is empty".into());
    }
    let mut tariffs = Vec::new();
    let mut seen = BTreeSet::new();
    for n in &names {
        match lookup(n) {
            Ok(s) => {
                if !seen.insert(s.name.clone()) {
                    errs.push(format!("tariffs: `{n}` listed twice"));
                }
                tariffs.push(s);
            }
            Err(e) => errs.push(format!("tariffs: {e}")),
        }
    }
    let mut references = Vec::new();
    for n in &file.calibration.references {
        match lookup(n) {
            Ok(s) => references.push(s),
            Err(e) => errs.push(format!("calibration.references: {e}")),
        }
    }
    if file.calibration.enabled && file.calibration.references.is_empty() {
        errs.push("calibration.references: at least one reference tariff is required".into());
    }

    let check = |what: &str, r: Result<()>, errs: &mut Vec<String>| {
        if let Err(e) = r {
            errs.push(format!("{what}: {e}"));
        }
    };
    check("costs", file.costs.validate(), &mut errs);
    check("battery", file.battery.validate(), &mut errs);
    check("powerflow.overload_curve", file.powerflow.overload_curve.validate(), &mut errs);
    if !(file.solver.tolerance > 0.0) {
        errs.push("solver.tolerance: must be positive".into());
    }
    if file.solver.time_limit_s.is_some_and(|t| !(t > 0.0)) {
        errs.push("solver.time_limit_s: must be positive".into());
    }
    let v = file.powerflow.voltage;
    if !(v.lower < 1.0 && 1.0 < v.upper) {
        errs.push("powerflow.voltage: limits must bracket 1.0 p.u.".into());
    }
    if !(file.powerflow.hosting_search_cap >= 1.0 && file.powerflow.hosting_tolerance > 0.0) {
        errs.push("powerflow: hosting_search_cap must be >= 1 and hosting_tolerance positive".into());
    }

    let coefficients = match file.coefficients.take() {
        Some(entries) => CoefficientTable { entries },
        None => CoefficientTable::default(),
    };

    if file.networks.is_empty() {
        errs.push("network: at least one [[network]] table is required".into());
    }
    let mut networks = Vec::new();
    let mut names_seen = BTreeSet::new();
    let mut building_owner: BTreeMap<String, String> = BTreeMap::new();
    let mut missing_coeffs = BTreeSet::new();
    for (i, n) in file.networks.iter().enumerate() {
        let f = |field: &str| format!("network[{i}].{field}");
        let net_path = existing(dir, &f("file"), &n.file, &mut errs);
        let buildings = existing(dir, &f("buildings"), &n.buildings, &mut errs);
        let roofs = existing(dir, &f("roofs"), &n.roofs, &mut errs);
        let library = existing(dir, &f("library"), &n.library, &mut errs);
        let meta_default = n.library.as_ref().map(|l| {
            let stem = l.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            l.with_file_name(format!("{stem}_meta.csv"))
        });
        let library_meta = existing(dir, &f("library_meta"), &n.library_meta.clone().or(meta_default), &mut errs);
        let curve = match &n.transformer_curve {
            Some(_) => existing(dir, &f("transformer_curve"), &n.transformer_curve, &mut errs),
            None => {
                if file.seed.is_none() {
                    errs.push(format!("seed: required to synthesize the transformer curve of network[{i}]"));
                }
                None
            }
        };
        let name = n.name.clone().or_else(|| {
            n.file
                .as_ref()
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
        });
        let Some(name) = name else {
            errs.push(f("name: missing and no file to derive it from"));
            continue;
        };
        if !names_seen.insert(name.clone()) {
            errs.push(format!("{}: duplicate network name `{name}`", f("name")));
        }

        let net = net_path.as_ref().and_then(|p| match load_network(p) {
            Ok(n) => Some(n),
            Err(e) => {
                errs.push(format!("{}: {e}", f("file")));
                None
            }
        });
        let metas = buildings.as_ref().and_then(|p| match read_buildings(p) {
            Ok(m) => Some(m),
            Err(e) => {
                errs.push(format!("{}: {e}", f("buildings")));
                None
            }
        });
        let roof_map = roofs.as_ref().and_then(|p| match read_roofs(p) {
            Ok(r) => Some(r),
            Err(e) => {
                errs.push(format!("{}: {e}", f("roofs")));
                None
            }
        });
        if let Some(metas) = &metas {
            if metas.is_empty() {
                errs.push(format!("{}: no buildings", f("buildings")));
            }
            for m in metas {
                if let Some(other) = building_owner.insert(m.building_id.clone(), name.clone()) {
                    errs.push(format!(
                        "{}: building {} also appears in network {other}",
                        f("buildings"),
                        m.building_id
                    ));
                }
                if let Some(net) = &net {
                    if !net.injections.contains_key(&m.building_id) {
                        errs.push(format!("{}: building {} has no injection point", f("file"), m.building_id));
                    }
                }
                if let Some(r) = &roof_map {
                    if !r.contains_key(&m.building_id) {
                        errs.push(format!("{}: building {} has no roof segments", f("roofs"), m.building_id));
                    }
                }
                if coefficients.get(m.category, &m.era).is_none() {
                    missing_coeffs.insert((m.category.as_str().to_string(), m.era.clone()));
                }
            }
        }
        if let (Some(file), Some(buildings), Some(roofs), Some(library), Some(library_meta)) =
            (net_path, buildings, roofs, library, library_meta)
        {
            networks.push(NetworkConfig {
                name,
                file,
                buildings,
                roofs,
                library,
                library_meta,
                transformer_curve: curve,
            });
        }
    }
    for (c, e) in missing_coeffs {
        errs.push(format!("coefficients: no value for category {c} / era {e}"));
    }

    if !errs.is_empty() {
        return Err(errs);
    }
    Ok(ScenarioConfig {
        seed: file.seed,
        year,
        days: file.days,
        step_minutes,
        out,
        jobs: file.jobs,
        weather: weather.expect("checked"),
        latitude,
        longitude,
        aggregate_load,
        tariffs,
        references,
        coefficients,
        costs: file.costs,
        battery: file.battery,
        solver: file.solver,
        calibration: file.calibration,
        powerflow: file.powerflow,
        output: file.output,
        networks,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub key: String,
    pub cached: bool,
}

/// Content-addressed artifact store under one directory.
#[derive(Debug)]
pub struct StageCache {
    dir: PathBuf,
    pub records: Vec<StageRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

impl StageCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(StageCache {
            dir,
            records: Vec::new(),
        })
    }

    pub fn key(stage: &str, material: &impl Serialize) -> Result<String> {
        Ok(sha256_hex(&serde_json::to_vec(&(stage, material))?))
    }

    fn path(&self, stage: &str, key: &str) -> PathBuf {
        let safe: String = stage
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
            .collect();
        self.dir.join(format!("{safe}-{}.json", &key[..16]))
    }

    /// Returns the stored artifact for `(stage, material)` or computes and stores it.
    /// Failures are wrapped with the stage name.
    pub fn run<T, F>(&mut self, stage: &str, material: &impl Serialize, compute: F) -> Result<(T, String)>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        let key = Self::key(stage, material)?;
        let path = self.path(stage, &key);
        if let Ok(bytes) = fs::read(&path) {
            if let Ok(v) = serde_json::from_slice(&bytes) {
                self.records.push(StageRecord {
                    stage: stage.into(),
                    key: key.clone(),
                    cached: true,
                });
                return Ok((v, key));
            }
        }
        let value = compute().map_err(|e| Error::Stage {
            stage: stage.into(),
            source: Box::new(e),
        })?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec(&value)?)?;
        fs::rename(&tmp, &path)?;
        self.records.push(StageRecord {
            stage: stage.into(),
            key: key.clone(),
            cached: false,
        });
        Ok((value, key))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub stages: Vec<StageRecord>,
    pub results: ScenarioResults,
    /// Report files relative to the output directory.
    pub written: Vec<PathBuf>,
    pub invariant_failures: Vec<String>,
}

impl ScenarioReport {
    pub fn exit_code(&self) -> i32 {
        if self.invariant_failures.is_empty() {
            0
        } else {
            2
        }
    }

    pub fn all_cached(&self) -> bool {
        self.stages.iter().all(|s| s.cached)
    }
}

/// Reconciled loads of one network's buildings on the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandArtifact {
    pub building_ids: Vec<String>,
    /// kWh over the grid, from the specific-consumption estimate.
    pub estimated_kwh: Vec<f64>,
    pub loads: Vec<Vec<f64>>,
    pub transformer: Vec<f64>,
}

struct NetData {
    name: String,
    network: Network,
    network_hash: String,
    demand: DemandArtifact,
    demand_key: String,
    pv: Vec<PvProfile>,
    pv_key: String,
}

struct Run<'a> {
    cfg: &'a ScenarioConfig,
    grid: TimeGrid,
    cache: StageCache,
    failures: Vec<String>,
    nets: Vec<NetData>,
    aggregate: Vec<f64>,
    aggregate_hash: String,
}

/// Data column resampled from a full-year table onto the grid.
fn on_grid(grid: &TimeGrid, table: &SeriesTable, column: &str, what: &str) -> Result<Vec<f64>> {
    if let Some(first) = table.timestamps.first() {
        use chrono::Datelike;
        if first.year() != grid.year_number() {
            return Err(Error::InvalidInput(format!(
                "{what}: data year {} differs from scenario year {}",
                first.year(),
                grid.year_number()
            )));
        }
    }
    grid.resample_year(table.column(column)?, table.step_minutes()?)
        .map_err(|e| Error::InvalidInput(format!("{what}: {e}")))
}

fn load_weather(cfg: &ScenarioConfig, grid: &TimeGrid) -> Result<WeatherYear> {
    let t = read_weather(&cfg.weather)?;
    Ok(WeatherYear {
        ghi: on_grid(grid, &t, "ghi_w_m2", "weather")?,
        ambient_temp: on_grid(grid, &t, "temp_c", "weather")?,
        latitude: cfg.latitude,
        longitude: cfg.longitude,
    })
}

fn max_abs_gap(loads: &[Vec<f64>], target: &[f64]) -> f64 {
    (0..target.len())
        .map(|t| (loads.iter().map(|l| l[t]).sum::<f64>() - target[t]).abs())
        .fold(0.0, f64::max)
}

impl<'a> Run<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        Ok(Run {
            cfg,
            grid: cfg.grid()?,
            cache: StageCache::new(cfg.out.join("cache"))?,
            failures: Vec::new(),
            nets: Vec::new(),
            aggregate: Vec::new(),
            aggregate_hash: String::new(),
        })
    }

    fn prepare(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let grid = &self.grid;
        let weather_hash = file_hash(&cfg.weather)?;
        let mut weather: Option<WeatherYear> = None;
        for (i, n) in cfg.networks.iter().enumerate() {
            let network = load_network(&n.file)?;
            let network_hash = file_hash(&n.file)?;
            let curve_hash = n.transformer_curve.as_deref().map(file_hash).transpose()?;
            let material = json!({
                "buildings": file_hash(&n.buildings)?,
                "library": file_hash(&n.library)?,
                "library_meta": file_hash(&n.library_meta)?,
                "transformer_curve": curve_hash,
                "seed": if curve_hash.is_none() { cfg.seed } else { None },
                "grid": grid,
                "coefficients": cfg.coefficients,
            });
            let (demand, demand_key) = self.cache.run(&format!("demand/{}", n.name), &material, || {
                let metas = read_buildings(&n.buildings)?;
                let (table, mut lib) = read_library(&n.library, &n.library_meta)?;
                for p in &mut lib.profiles {
                    let s = on_grid(grid, &table, &p.id, "library")?;
                    let total: f64 = s.iter().sum();
                    if !(total > 0.0) {
                        return Err(Error::InvalidInput(format!("library profile {} is zero on the grid", p.id)));
                    }
                    p.shape = s.iter().map(|v| v / total).collect();
                }
                let with_energy = metas
                    .iter()
                    .map(|m| Ok((m.clone(), estimate_annual_energy(m, &cfg.coefficients)? * grid.year_fraction())))
                    .collect::<Result<Vec<_>>>()?;
                let stage1 = allocate_stage1(&with_energy, &lib, grid.step_hours())?;
                let transformer = match &n.transformer_curve {
                    Some(p) => on_grid(grid, &read_transformer_curve(p)?, "kw", "transformer curve")?,
                    None => {
                        let seed = cfg.seed.ok_or_else(|| Error::Config("seed required".into()))?;
                        synth_transformer_curve(seed.wrapping_add(i as u64), &stage1, 1.0)
                    }
                };
                let loads = reconcile_stage2(&stage1, &transformer)?;
                Ok(DemandArtifact {
                    building_ids: metas.iter().map(|m| m.building_id.clone()).collect(),
                    estimated_kwh: with_energy.iter().map(|(_, e)| *e).collect(),
                    loads,
                    transformer,
                })
            })?;
            let gap = max_abs_gap(&demand.loads, &demand.transformer);
            if gap > 1e-6 {
                self.failures
                    .push(format!("{}: reconciled loads miss the transformer curve by {gap:e} kW", n.name));
            }

            let material = json!({
                "weather": weather_hash,
                "roofs": file_hash(&n.roofs)?,
                "buildings": demand.building_ids,
                "grid": grid,
                "latitude": cfg.latitude,
                "longitude": cfg.longitude,
                "pv": PvParams::default(),
            });
            let (pv, pv_key) = self.cache.run(&format!("pv/{}", n.name), &material, || {
                if weather.is_none() {
                    weather = Some(load_weather(cfg, grid)?);
                }
                let w = weather.as_ref().expect("loaded");
                w.validate(grid)?;
                let roofs = read_roofs(&n.roofs)?;
                demand
                    .building_ids
                    .par_iter()
                    .map(|id| {
                        let segs = roofs
                            .get(id)
                            .ok_or_else(|| Error::InvalidInput(format!("building {id} has no roof segments")))?;
                        pv_profile(w, grid, segs, &PvParams::default())
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            self.nets.push(NetData {
                name: n.name.clone(),
                network,
                network_hash,
                demand,
                demand_key,
                pv,
                pv_key,
            });
        }
        // The dynamic price follows the utility's expected load when given, otherwise the
        // combined load of all configured networks.
        self.aggregate = match &cfg.aggregate_load {
            Some(p) => on_grid(grid, &read_transformer_curve(p)?, "kw", "aggregate load")?,
            None => {
                let mut a = vec![0.0; grid.len()];
                for nd in &self.nets {
                    for (a, t) in a.iter_mut().zip(&nd.demand.transformer) {
                        *a += t;
                    }
                }
                a
            }
        };
        self.aggregate_hash = sha256_hex(&serde_json::to_vec(&self.aggregate)?);
        Ok(())
    }

    fn optimize(&mut self, net: usize, spec: &TariffSpec) -> Result<(Vec<SystemDesign>, String)> {
        let cfg = self.cfg;
        let grid = &self.grid;
        let nd = &self.nets[net];
        let aggregate = &self.aggregate;
        let material = json!({
            "demand": nd.demand_key,
            "pv": nd.pv_key,
            "spec": spec,
            "aggregate": self.aggregate_hash,
            "costs": cfg.costs,
            "battery": cfg.battery,
            "solver": cfg.solver,
        });
        let stage = format!("optimize/{}/{}", nd.name, spec.name);
        let (designs, key) = self.cache.run(&stage, &material, || {
            let schedule = build_schedule(spec, grid, Some(aggregate))?;
            let options = cfg.solver.options();
            nd.demand
                .building_ids
                .par_iter()
                .enumerate()
                .map(|(i, id)| {
                    let input = BuildingInput {
                        id: id.clone(),
                        load: nd.demand.loads[i].clone(),
                        pv: nd.pv[i].clone(),
                    };
                    formulate_program(&input, &schedule, &cfg.costs, &cfg.battery)
                        .and_then(|p| solve_design(&p, &options))
                        .map_err(|e| Error::Stage {
                            stage: format!("building {id}"),
                            source: Box::new(e),
                        })
                })
                .collect::<Result<Vec<SystemDesign>>>()
        })?;
        for (id, d) in nd.demand.building_ids.iter().zip(&designs) {
            for v in d.check(&cfg.battery, grid.step_hours(), 1e-6) {
                self.failures.push(format!("{stage}: {id}: {v}"));
            }
            if !d.optimal {
                self.failures.push(format!("{stage}: {id}: solver stopped before optimality"));
            }
        }
        Ok((designs, key))
    }

    fn ctx(&self) -> CalibrationContext<'_> {
        CalibrationContext {
            grid: &self.grid,
            aggregate_load: Some(&self.aggregate),
        }
    }

    /// Mean reference revenue per network plus the reference dispatches.
    fn references(&mut self) -> Result<Vec<(f64, Vec<(Vec<SystemDesign>, String)>)>> {
        let mut out = Vec::new();
        for net in 0..self.nets.len() {
            let mut runs = Vec::new();
            let mut total = 0.0;
            for spec in &self.cfg.references {
                let (d, key) = self.optimize(net, spec)?;
                total += fleet_revenue(spec, self.ctx(), &d)?;
                runs.push((d, key));
            }
            let mean = if runs.is_empty() { f64::NAN } else { total / runs.len() as f64 };
            out.push((mean, runs));
        }
        Ok(out)
    }

    /// Calibrated spec per (network, tariff) plus the records for the report.
    fn calibrate_all(
        &mut self,
        refs: &[(f64, Vec<(Vec<SystemDesign>, String)>)],
    ) -> Result<(Vec<BTreeMap<String, TariffSpec>>, Vec<CalibrationRecord>)> {
        let cfg = self.cfg;
        let mut used: Vec<BTreeMap<String, TariffSpec>> = vec![BTreeMap::new(); self.nets.len()];
        let mut records = Vec::new();
        let is_reference = |s: &TariffSpec| cfg.references.iter().any(|r| r.name == s.name);
        for spec in cfg.run_order() {
            let mut per_net = Vec::new();
            for (net, (mean, runs)) in refs.iter().enumerate() {
                if !cfg.calibration.enabled || is_reference(spec) {
                    used[net].insert(spec.name.clone(), spec.clone());
                    continue;
                }
                let material = json!({
                    "spec": spec,
                    "references": runs.iter().map(|r| &r.1).collect::<Vec<_>>(),
                    "aggregate": self.aggregate_hash,
                    "grid": self.grid,
                });
                let stage = format!("calibrate/{}/{}", self.nets[net].name, spec.name);
                let ctx = CalibrationContext {
                    grid: &self.grid,
                    aggregate_load: Some(&self.aggregate),
                };
                let n_refs = runs.len() as f64;
                let network = self.nets[net].name.clone();
                let (rec, _): (CalibrationRecord, _) = self.cache.run(&stage, &material, || {
                    let dispatches: Vec<SystemDesign> = runs.iter().flat_map(|r| r.0.iter().cloned()).collect();
                    let c = calibrate(spec, ctx, &dispatches, mean * n_refs)?;
                    Ok(CalibrationRecord {
                        network,
                        tariff: spec.name.clone(),
                        scale: c.scale,
                        target_revenue: *mean,
                        achieved_revenue: c.revenue / n_refs,
                        spec: c.spec,
                    })
                })?;
                let rel = (rec.achieved_revenue - rec.target_revenue).abs() / rec.target_revenue.abs();
                if rel > 1e-3 {
                    self.failures
                        .push(format!("{stage}: revenue off target by {:.3} %", 100.0 * rel));
                }
                per_net.push(rec.spec.clone());
                used[net].insert(spec.name.clone(), rec.spec.clone());
                records.push(rec);
            }
            if cfg.calibration.average_across_networks && per_net.len() > 1 {
                let avg = average_specs(&per_net)?;
                let mut achieved = 0.0;
                let mut target = 0.0;
                for (net, (mean, runs)) in refs.iter().enumerate() {
                    let dispatches: Vec<SystemDesign> = runs.iter().flat_map(|r| r.0.iter().cloned()).collect();
                    achieved += fleet_revenue(&avg, self.ctx(), &dispatches)? / runs.len() as f64;
                    target += mean;
                    used[net].insert(spec.name.clone(), avg.clone());
                }
                let k = refs.len() as f64;
                records.push(CalibrationRecord {
                    network: "average".into(),
                    tariff: spec.name.clone(),
                    scale: f64::NAN,
                    target_revenue: target / k,
                    achieved_revenue: achieved / k,
                    spec: avg,
                });
            }
        }
        Ok((used, records))
    }

    fn powerflow(&mut self, net: usize, tariff: &str, designs: &[SystemDesign], opt_key: &str) -> Result<PowerflowSummary> {
        let cfg = self.cfg;
        let grid = &self.grid;
        let nd = &self.nets[net];
        let material = json!({
            "network": nd.network_hash,
            "designs": opt_key,
            "powerflow": cfg.powerflow,
            "grid": grid,
        });
        let stage = format!("powerflow/{}/{tariff}", nd.name);
        let (summary, _): (PowerflowSummary, _) = self.cache.run(&stage, &material, || {
            let map: BTreeMap<String, SystemDesign> =
                nd.demand.building_ids.iter().cloned().zip(designs.iter().cloned()).collect();
            let res = run_timeseries(&nd.network, &map, &cfg.powerflow.sweep)?;
            let rating = nd.network.transformer.rating(cfg.powerflow.use_virtual_rating);
            let overload = overload_events_in(
                &res.transformer_flow,
                &grid.block_ranges(),
                rating,
                grid.step_minutes() as f64,
                &cfg.powerflow.overload_curve,
            );
            Ok(PowerflowSummary {
                rating_kva: rating,
                overload,
                stats: voltage_line_stats(&res, &cfg.powerflow.voltage),
                peak_import: res.transformer_flow.iter().copied().fold(0.0, f64::max),
                peak_export: res.transformer_flow.iter().map(|f| -f).fold(0.0, f64::max),
                conservation_error: res.conservation_error(),
                min_loss_kw: res.losses.iter().copied().fold(f64::INFINITY, f64::min),
            })
        })?;
        if summary.conservation_error > 1e-6 {
            self.failures
                .push(format!("{stage}: power balance error {:e}", summary.conservation_error));
        }
        if summary.min_loss_kw < -1e-9 {
            self.failures.push(format!("{stage}: negative losses {:e} kW", summary.min_loss_kw));
        }
        Ok(summary)
    }

    fn hosting(&mut self, net: usize) -> Result<HostingRecord> {
        let cfg = self.cfg;
        let grid = &self.grid;
        let nd = &self.nets[net];
        let material = json!({
            "network": nd.network_hash,
            "demand": nd.demand_key,
            "pv": nd.pv_key,
            "powerflow": cfg.powerflow,
            "grid": grid,
        });
        let (rec, _) = self.cache.run(&format!("hosting/{}", nd.name), &material, || {
            let mut map = BTreeMap::new();
            let mut potential = 0.0;
            for (i, id) in nd.demand.building_ids.iter().enumerate() {
                let mut d = SystemDesign::grid_only(&nd.demand.loads[i]);
                d.pv_capacity = nd.pv[i].max_capacity;
                d.pv_gen = nd.pv[i].output(d.pv_capacity);
                potential += d.pv_capacity;
                map.insert(id.clone(), d);
            }
            let opts = HostingOptions {
                tolerance: cfg.powerflow.hosting_tolerance,
                search_cap: cfg.powerflow.hosting_search_cap,
                use_virtual_rating: cfg.powerflow.use_virtual_rating,
                limits: cfg.powerflow.voltage,
                curve: cfg.powerflow.overload_curve.clone(),
                sweep: cfg.powerflow.sweep,
                step_minutes: grid.step_minutes() as f64,
                segments: grid.block_ranges(),
            };
            let result = match hosting_capacity(&nd.network, &map, &opts) {
                Ok(h) => Ok(h),
                Err(e @ Error::DemandSideViolations(_)) => Err(e.to_string()),
                Err(e) => return Err(e),
            };
            Ok(HostingRecord {
                network: nd.name.clone(),
                result,
                potential_kw: potential,
            })
        })?;
        Ok(rec)
    }

    fn write_outputs(&self, designs: &[(usize, String, Vec<SystemDesign>)]) -> Result<()> {
        let out = &self.cfg.out;
        let ts = self.grid.timestamps();
        if self.cfg.output.profiles {
            let dir = out.join("profiles");
            fs::create_dir_all(&dir)?;
            for nd in &self.nets {
                write_profiles(&dir.join(format!("{}.csv", nd.name)), ts, &nd.demand.building_ids, &nd.demand.loads)?;
            }
        }
        if self.cfg.output.designs {
            for (net, tariff, ds) in designs {
                let nd = &self.nets[*net];
                let dir = out.join("designs").join(&nd.name).join(tariff);
                fs::create_dir_all(&dir)?;
                for (id, d) in nd.demand.building_ids.iter().zip(ds) {
                    write_design(&dir.join(format!("{id}.csv")), ts, d)?;
                }
            }
        }
        Ok(())
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

/// Runs the reference optimizations and the calibration only.
pub fn calibrate_scenario(cfg: &ScenarioConfig) -> Result<(Vec<CalibrationRecord>, Vec<StageRecord>)> {
    with_jobs(cfg.jobs, || {
        let mut run = Run::new(cfg)?;
        run.prepare()?;
        let refs = run.references()?;
        let (_, records) = run.calibrate_all(&refs)?;
        Ok((records, run.cache.records))
    })
}

/// Executes every stage and writes the report under `cfg.out`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    with_jobs(cfg.jobs, || run_inner(cfg))
}

fn run_inner(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut run = Run::new(cfg)?;
    run.prepare()?;
    let refs = run.references()?;
    let (used, calibration) = run.calibrate_all(&refs)?;
    let order: Vec<TariffSpec> = cfg.run_order().into_iter().cloned().collect();
    let mut cells = Vec::new();
    let mut kept = Vec::new();
    for net in 0..run.nets.len() {
        for spec in &order {
            let spec_used = &used[net][&spec.name];
            let (designs, key) = run.optimize(net, spec_used)?;
            let schedule = build_schedule(spec_used, &run.grid, Some(&run.aggregate))?;
            let ids = &run.nets[net].demand.building_ids;
            let mut kpis = Vec::new();
            let mut bills = Vec::new();
            for (id, d) in ids.iter().zip(&designs) {
                kpis.push(building_kpi(id, d, &schedule, &run.grid)?);
                bills.push((id.clone(), bill(&schedule, d)?));
            }
            let powerflow = if cfg.powerflow.enabled {
                Some(run.powerflow(net, &spec.name, &designs, &key)?)
            } else {
                None
            };
            cells.push(CellResult {
                network: run.nets[net].name.clone(),
                tariff: spec.name.clone(),
                annual_cost: designs.iter().map(|d| d.tco / run.grid.year_fraction()).collect(),
                utility_revenue: bills.iter().map(|b| b.1.utility_revenue()).sum(),
                reference_revenue: refs[net].0,
                grid_portion: bills.iter().map(|b| b.1.grid_portion).sum(),
                kpis,
                bills,
                powerflow,
            });
            if cfg.output.designs {
                kept.push((net, spec.name.clone(), designs));
            }
        }
    }
    let mut hosting = Vec::new();
    if cfg.powerflow.enabled && cfg.powerflow.hosting_capacity {
        for net in 0..run.nets.len() {
            hosting.push(run.hosting(net)?);
        }
    }
    let results = ScenarioResults {
        networks: run.nets.iter().map(|n| n.name.clone()).collect(),
        tariffs: order.iter().map(|s| s.name.clone()).collect(),
        references: cfg.references.iter().map(|s| s.name.clone()).collect(),
        year_fraction: run.grid.year_fraction(),
        step_minutes: run.grid.step_minutes() as f64,
        cells,
        calibration,
        hosting,
        overload_curve: cfg.powerflow.overload_curve.clone(),
    };

    run.write_outputs(&kept)?;
    let out = cfg.out.clone();
    let results_json = serde_json::to_vec_pretty(&results)?;
    let (written, _): (Vec<PathBuf>, _) = run.cache.run("report", &sha256_hex(&results_json), || {
        write_report(&results, &results_json, &out)
    })?;
    if !written.iter().all(|p| out.join(p).is_file()) {
        write_report(&results, &results_json, &out)?;
    }
    Ok(ScenarioReport {
        stages: run.cache.records,
        results,
        written,
        invariant_failures: run.failures,
    })
}

fn write_report(results: &ScenarioResults, json: &[u8], out: &Path) -> Result<Vec<PathBuf>> {
    let manifest = emit_report(results, out)?;
    fs::write(out.join("results.json"), json)?;
    let mut written: Vec<PathBuf> = manifest
        .written
        .iter()
        .map(|p| p.strip_prefix(out).unwrap_or(p).to_path_buf())
        .collect();
    written.push("MANIFEST.csv".into());
    written.push("results.json".into());
    Ok(written)
}

/// Re-emits the report tables from a stored `results.json`.
pub fn report_from_results(out: &Path) -> Result<Vec<PathBuf>> {
    let json = fs::read(out.join("results.json"))?;
    let results: ScenarioResults = serde_json::from_slice(&json)?;
    write_report(&results, &json, out)
}
