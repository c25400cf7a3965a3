use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use tarifflab::fixture::{write_fixture, FixtureOptions};
use tarifflab::io::{read_series, write_series};
use tarifflab::network::{load_network, overload_events, run_net_loads, OverloadCurve, SweepOptions};
use tarifflab::report::fmt6;
use tarifflab::scenario::{calibrate_scenario, report_from_results, run_scenario, validate_config_with, Overrides, ScenarioConfig};
use tarifflab::synth::NetworkKind;

#[derive(Parser)]
#[command(name = "tarifflab", version, about = "PV and battery investment under alternative tariffs, with LV grid impact")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    #[arg(long)]
    config: PathBuf,
    /// Restrict the run to these tariffs (repeatable).
    #[arg(long = "tariff", num_args = 1..)]
    tariffs: Vec<String>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    days: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario config and list every problem found.
    Validate(ScenarioArgs),
    /// Write a synthetic input set and a scenario config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        days: Option<u32>,
        /// KIND[:BUILDINGS], e.g. `rural:8` or `urban` (repeatable).
        #[arg(long = "network", num_args = 1..)]
        networks: Vec<String>,
        #[arg(long = "tariff", num_args = 1..)]
        tariffs: Vec<String>,
        #[arg(long, default_value_t = 3)]
        profiles: usize,
        /// Let the run synthesize transformer curves instead of writing them.
        #[arg(long)]
        no_transformer_curves: bool,
        #[arg(long)]
        hosting: bool,
    },
    /// Optimize under the reference tariffs and print calibrated coefficients.
    Calibrate(ScenarioArgs),
    /// Run every stage and write the report.
    Run(ScenarioArgs),
    /// Time-series power flow for given per-building net loads.
    Powerflow {
        #[arg(long)]
        network: PathBuf,
        /// CSV with a timestamp column and one net-load column (kW) per building.
        #[arg(long)]
        loads: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        virtual_rating: bool,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Rewrite report tables from a previous run's results.json.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(args: &ScenarioArgs) -> anyhow::Result<ScenarioConfig> {
    let overrides = Overrides {
        tariffs: (!args.tariffs.is_empty()).then(|| args.tariffs.clone()),
        seed: args.seed,
        days: args.days,
        out: args.out.clone(),
        jobs: args.jobs,
    };
    validate_config_with(&args.config, &overrides).map_err(|errs| {
        for e in &errs {
            eprintln!("error: {e}");
        }
        anyhow::anyhow!("{} problem(s) in {}", errs.len(), args.config.display())
    })
}

fn parse_network(s: &str) -> anyhow::Result<(NetworkKind, usize)> {
    let (kind, n) = match s.split_once(':') {
        Some((k, n)) => (k, Some(n)),
        None => (s, None),
    };
    let kind = NetworkKind::parse(kind)?;
    let n = match n {
        Some(n) => n.parse().with_context(|| format!("bad building count in `{s}`"))?,
        None => kind.buildings(),
    };
    Ok((kind, n))
}

fn powerflow(network: &Path, loads: &Path, out: &Path, virtual_rating: bool) -> anyhow::Result<()> {
    let net = load_network(network)?;
    let table = read_series(loads)?;
    let step = table.step_minutes()? as f64;
    let series: BTreeMap<String, Vec<f64>> = table.names.iter().cloned().zip(table.columns.iter().cloned()).collect();
    let res = run_net_loads(&net, &series, &SweepOptions::default())?;
    std::fs::create_dir_all(out)?;
    let ts = &table.timestamps;
    write_series(&out.join("transformer.csv"), ts, &[("flow_kw", &res.transformer_flow), ("losses_kw", &res.losses)])?;
    let cols: Vec<(&str, &[f64])> = res.bus_ids.iter().map(String::as_str).zip(res.bus_voltage.iter().map(Vec::as_slice)).collect();
    write_series(&out.join("bus_voltage.csv"), ts, &cols)?;
    let cols: Vec<(&str, &[f64])> = res.line_ids.iter().map(String::as_str).zip(res.line_loading.iter().map(Vec::as_slice)).collect();
    write_series(&out.join("line_loading.csv"), ts, &cols)?;
    let rating = net.transformer.rating(virtual_rating);
    let over = overload_events(&res.transformer_flow, rating, step, &OverloadCurve::default());
    println!(
        "{} steps, rating {} kVA, {} overload events ({} h), {} beyond the curve, balance error {:e}",
        res.len(),
        fmt6(rating),
        over.events.len(),
        fmt6(over.overload_hours),
        over.violations,
        res.conservation_error()
    );
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Validate(args) => {
            let cfg = load(&args)?;
            let names: Vec<&str> = cfg.tariffs.iter().map(|t| t.name.as_str()).collect();
            println!(
                "ok: {} network(s), tariffs [{}], {}",
                cfg.networks.len(),
                names.join(", "),
                cfg.days.map_or("full year".to_string(), |d| format!("{d} days"))
            );
        }
        Command::Synth {
            out,
            seed,
            days,
            networks,
            tariffs,
            profiles,
            no_transformer_curves,
            hosting,
        } => {
            let mut opts = FixtureOptions {
                seed,
                days: days.or(FixtureOptions::default().days),
                profiles_per_category: profiles,
                transformer_curves: !no_transformer_curves,
                hosting_capacity: hosting,
                tariffs: (!tariffs.is_empty()).then_some(tariffs),
                ..Default::default()
            };
            if !networks.is_empty() {
                opts.networks = networks.iter().map(|s| parse_network(s)).collect::<anyhow::Result<_>>()?;
            }
            let path = write_fixture(&out, &opts)?;
            println!("wrote {}", path.display());
        }
        Command::Calibrate(args) => {
            let cfg = load(&args)?;
            let (records, _) = calibrate_scenario(&cfg)?;
            println!("network,tariff,scale,target_revenue,achieved_revenue,coefficients");
            for r in records {
                println!(
                    "{},{},{},{},{},\"{}\"",
                    r.network,
                    r.tariff,
                    fmt6(r.scale),
                    fmt6(r.target_revenue),
                    fmt6(r.achieved_revenue),
                    r.spec.describe()
                );
            }
        }
        Command::Run(args) => {
            let cfg = load(&args)?;
            let report = run_scenario(&cfg)?;
            let cached = report.stages.iter().filter(|s| s.cached).count();
            println!(
                "{} stages ({} from cache), {} report files under {}",
                report.stages.len(),
                cached,
                report.written.len(),
                cfg.out.display()
            );
            for f in &report.invariant_failures {
                eprintln!("invariant: {f}");
            }
            return Ok(ExitCode::from(report.exit_code() as u8));
        }
        Command::Powerflow {
            network,
            loads,
            out,
            virtual_rating,
            jobs,
        } => {
            if jobs == Some(0) {
                bail!("--jobs must be at least 1");
            }
            let work = || powerflow(&network, &loads, &out, virtual_rating);
            match jobs {
                Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(work)?,
                None => work()?,
            }
        }
        Command::Report { out } => {
            let written = report_from_results(&out)?;
            println!("rewrote {} files under {}", written.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
