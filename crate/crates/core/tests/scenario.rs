use std::fs;
use std::path::Path;
use std::process::Command;

use tarifflab::fixture::{write_fixture, FixtureOptions};
use tarifflab::scenario::{report_from_results, run_scenario, validate_config, validate_config_with, Overrides};
use tarifflab::synth::NetworkKind;
use tarifflab::tariff::PRESET_NAMES;

fn small() -> FixtureOptions {
    FixtureOptions {
        days: Some(7),
        networks: vec![(NetworkKind::Rural, 3)],
        tariffs: Some(vec!["ct-monthly".into()]),
        ..Default::default()
    }
}

const MINIMAL: &str = r#"
weather = "weather.csv"
seed = 7

[[network]]
file = "rural.toml"
buildings = "rural_buildings.csv"
roofs = "rural_roofs.csv"
library = "library.csv"
library_meta = "library_meta.csv"
"#;

fn minimal(dir: &Path) -> std::path::PathBuf {
    write_fixture(dir, &small()).unwrap();
    let path = dir.join("minimal.toml");
    fs::write(&path, MINIMAL).unwrap();
    path
}

#[test]
fn minimal_config_gets_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = validate_config(&minimal(dir.path())).unwrap();
    let names: Vec<&str> = cfg.tariffs.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names, PRESET_NAMES);
    assert_eq!(cfg.days, None);
    assert_eq!(cfg.step_minutes, 15);
    assert_eq!(cfg.networks.len(), 1);
    // An unnamed network is named after its file.
    assert_eq!(cfg.networks[0].name, "rural");
    assert_eq!(cfg.out, dir.path().join("out"));
    assert!(cfg.calibration.enabled && cfg.powerflow.enabled);
}

#[test]
fn missing_weather_is_one_named_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = minimal(dir.path());
    fs::remove_file(dir.path().join("weather.csv")).unwrap();
    let errs = validate_config(&path).unwrap_err();
    assert_eq!(errs.len(), 1, "{errs:?}");
    assert!(errs[0].starts_with("weather:"), "{}", errs[0]);
}

#[test]
fn every_error_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = minimal(dir.path());
    fs::remove_file(dir.path().join("weather.csv")).unwrap();
    let text = format!("tariffs = [\"ft\", \"nightly\"]\n{MINIMAL}");
    fs::write(&path, text).unwrap();
    let errs = validate_config(&path).unwrap_err();
    assert_eq!(errs.len(), 2, "{errs:?}");
    assert!(errs.iter().any(|e| e.starts_with("weather:")));
    assert!(errs.iter().any(|e| e.starts_with("tariffs:") && e.contains("nightly")));
}

#[test]
fn unknown_keys_and_bad_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = minimal(dir.path());
    fs::write(&path, format!("colour = \"red\"\n{MINIMAL}")).unwrap();
    let errs = validate_config(&path).unwrap_err();
    assert!(errs[0].contains("colour"), "{errs:?}");

    fs::write(&path, format!("days = 0\n{MINIMAL}\n[battery]\ncharge_efficiency = 1.5\n")).unwrap();
    let errs = validate_config(&path).unwrap_err();
    assert!(errs.iter().any(|e| e.starts_with("days:")), "{errs:?}");
    assert!(errs.iter().any(|e| e.starts_with("battery:")), "{errs:?}");
}

#[test]
fn overrides_take_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_fixture(dir.path(), &small()).unwrap();
    let o = Overrides {
        tariffs: Some(vec!["DT solar".into()]),
        days: Some(14),
        seed: Some(99),
        ..Default::default()
    };
    let cfg = validate_config_with(&path, &o).unwrap();
    assert_eq!(cfg.tariffs[0].name, "dt-solar");
    assert_eq!((cfg.days, cfg.seed), (Some(14), Some(99)));
}

#[test]
fn rerun_is_served_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = validate_config(&write_fixture(dir.path(), &small()).unwrap()).unwrap();
    let first = run_scenario(&cfg).unwrap();
    assert!(first.invariant_failures.is_empty(), "{:?}", first.invariant_failures);
    // Each distinct stage is computed once; repeats within the run (the reference
    // optimizations reused by calibration) come from the cache.
    let mut seen = std::collections::HashSet::new();
    for s in &first.stages {
        assert_eq!(s.cached, !seen.insert(&s.key), "{s:?}");
    }
    let tables = cfg.out.join("tables");
    let before = fs::read(tables.join("capacities.csv")).unwrap();

    let second = run_scenario(&cfg).unwrap();
    assert!(second.all_cached(), "{:?}", second.stages);
    assert_eq!(second.results, first.results);

    // A deleted report file is rewritten from the cached results.
    fs::remove_file(tables.join("capacities.csv")).unwrap();
    let third = run_scenario(&cfg).unwrap();
    assert!(third.all_cached());
    assert_eq!(fs::read(tables.join("capacities.csv")).unwrap(), before);

    fs::remove_dir_all(&tables).unwrap();
    let written = report_from_results(&cfg.out).unwrap();
    assert!(written.iter().any(|p| p.ends_with("capacities.csv")));
    assert_eq!(fs::read(tables.join("capacities.csv")).unwrap(), before);

    // Restricting the tariffs reuses the demand and PV stages.
    let cfg2 = validate_config_with(
        &dir.path().join("scenario.toml"),
        &Overrides {
            tariffs: Some(vec!["ct-daily".into()]),
            ..Default::default()
        },
    )
    .unwrap();
    let fourth = run_scenario(&cfg2).unwrap();
    let cached = |prefix: &str| fourth.stages.iter().filter(|s| s.stage.starts_with(prefix)).all(|s| s.cached);
    assert!(cached("demand/") && cached("pv/"));
    assert!(!fourth.stages.iter().any(|s| s.stage == "optimize/rural/ct-daily" && s.cached));
}

fn tarifflab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tarifflab")).args(args).output().unwrap()
}

#[test]
fn cli_synth_validate_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap();
    let out = tarifflab(&["synth", "--out", root, "--network", "rural:3", "--days", "7", "--tariff", "dynamic"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let config = dir.path().join("scenario.toml");
    let config = config.to_str().unwrap();

    let out = tarifflab(&["validate", "--config", config]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success() && stdout.starts_with("ok: 1 network(s), tariffs [dynamic]"), "{stdout}");

    let out = tarifflab(&["validate", "--config", config, "--tariff", "nightly", "--days", "0"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nightly") && stderr.contains("days:"), "{stderr}");

    let run_dir = dir.path().join("run");
    let out = tarifflab(&["run", "--config", config, "--jobs", "2", "--seed", "3", "--out", run_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run_dir.join("tables/grid_recovery.csv").is_file());
    assert!(run_dir.join("MANIFEST.csv").is_file());

    let out = tarifflab(&["calibrate", "--config", config, "--out", run_dir.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success() && stdout.lines().nth(1).unwrap().starts_with("rural,dynamic,"), "{stdout}");

    let out = tarifflab(&["report", "--out", run_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn cli_powerflow_writes_series() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.toml");
    fs::write(
        &net,
        r#"
[transformer]
s_rated = 50
lv_bus = "lv"
[[buses]]
id = "lv"
v_nominal = 400
[[buses]]
id = "a"
v_nominal = 400
[[lines]]
id = "l1"
from = "lv"
to = "a"
r = 0.05
x = 0.02
ampacity = 200
[injections]
h1 = "a"
"#,
    )
    .unwrap();
    let loads = dir.path().join("loads.csv");
    fs::write(&loads, "timestamp,h1\n2025-06-01 12:00,-60\n2025-06-01 12:15,-60\n2025-06-01 12:30,10\n").unwrap();
    let out_dir = dir.path().join("pf");
    let out = tarifflab(&[
        "powerflow",
        "--network",
        net.to_str().unwrap(),
        "--loads",
        loads.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("1 overload events (0.5 h)"), "{stdout}");
    let flows = fs::read_to_string(out_dir.join("transformer.csv")).unwrap();
    assert_eq!(flows.lines().count(), 4);
    assert!(out_dir.join("bus_voltage.csv").is_file() && out_dir.join("line_loading.csv").is_file());
}
