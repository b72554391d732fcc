//! Batch front end for the platoon simulator.
//!
//! Four subcommands: `run` one strategy and write the trip artifacts,
//! `compare` several strategies on one cycle, `sweep` the commanded
//! formation gap, and `selftest` the numerical kernels.  Everything is
//! deterministic; artifact bytes repeat except the isolated timestamp
//! field in the JSON summaries.
//!
//! Exit codes: 0 success, 1 runtime failure (solver breakdown, collision,
//! failed self-check), 2 configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ecoplatoon::cycle::{resolve_cycle, Units};
use ecoplatoon::report::{
    compare_listed, comparison_text, now_unix_s, sweep_desired_gap, trip_summary,
    write_comparison_csv, write_comparison_json, write_comparison_txt, write_summary_json,
    write_sweep_csv, write_sweep_json, write_trip_csv,
};
use ecoplatoon::selfcheck;
use ecoplatoon::sim::{run_scenario_on, ScenarioConfig, Strategy};
use ecoplatoon::Error;

#[derive(Parser)]
#[command(
    name = "ecoplatoon",
    about = "Deterministic four-truck platoon simulator with a fuel-optimal preview leader",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every simulating subcommand.
#[derive(Args)]
struct ScenarioArgs {
    /// TOML scenario file; defaults are used when omitted
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// drive-cycle reference: a CSV path or a builtin name
    /// (sawtooth60, transient600)
    #[arg(long, value_name = "CYCLE")]
    cycle: Option<String>,

    /// speed units of the cycle file (m/s, km/h, mph); overrides the
    /// file's own header hint
    #[arg(long, value_name = "UNITS")]
    units: Option<String>,

    /// seconds of constant-speed tail appended after the cycle
    #[arg(long, value_name = "S")]
    tail_seconds: Option<f64>,

    /// actuation lag of every truck, seconds
    #[arg(long, value_name = "S")]
    tau: Option<f64>,

    /// fuel-model calibration terms
    #[arg(long, value_name = "COEF")]
    lambda0: Option<f64>,
    #[arg(long, value_name = "COEF")]
    lambda1: Option<f64>,
    #[arg(long, value_name = "COEF")]
    lambda2: Option<f64>,

    /// output directory for artifacts
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one strategy and write trip.csv plus summary.json
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// strategy to run (eco-dmpc, dmpc, idm)
        #[arg(long, value_name = "NAME")]
        strategy: Option<String>,
    },
    /// Run several strategies on one cycle and write the comparison tables
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// strategies to compare; repeat the flag to list them
        /// (default: eco-dmpc dmpc idm)
        #[arg(long = "strategy", value_name = "NAME")]
        strategies: Vec<String>,
    },
    /// Rerun the preview strategy over a set of commanded gaps
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// commanded formation gap in metres; repeat the flag per gap
        #[arg(long = "gap", value_name = "M")]
        gaps: Vec<f64>,
    },
    /// Check the numerical kernels against their oracles
    Selftest,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch() -> Result<ExitCode, Error> {
    match Cli::parse().command {
        Command::Run { scenario, strategy } => cmd_run(scenario, strategy),
        Command::Compare { scenario, strategies } => cmd_compare(scenario, strategies),
        Command::Sweep { scenario, gaps } => cmd_sweep(scenario, gaps),
        Command::Selftest => Ok(cmd_selftest()),
    }
}

/// Loads the scenario file (or defaults) and applies the flag overrides.
fn build_config(args: &ScenarioArgs) -> Result<ScenarioConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(cycle) = &args.cycle {
        cfg.cycle = cycle.clone();
    }
    if let Some(units) = &args.units {
        cfg.cycle_units = Some(units.parse::<Units>().map_err(Error::Config)?);
    }
    if let Some(tail) = args.tail_seconds {
        cfg.tail_s = tail;
    }
    if let Some(tau) = args.tau {
        cfg.truck.actuation_lag_s = tau;
    }
    if let Some(l0) = args.lambda0 {
        cfg.fuel.lambda0 = l0;
    }
    if let Some(l1) = args.lambda1 {
        cfg.fuel.lambda1 = l1;
    }
    if let Some(l2) = args.lambda2 {
        cfg.fuel.lambda2 = l2;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_out_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })
}

fn parse_strategy(name: &str) -> Result<Strategy, Error> {
    name.parse::<Strategy>()
}

fn cmd_run(args: ScenarioArgs, strategy: Option<String>) -> Result<ExitCode, Error> {
    let mut cfg = build_config(&args)?;
    if let Some(name) = &strategy {
        cfg.strategy = parse_strategy(name)?;
    }
    let cycle = resolve_cycle(&cfg.cycle, cfg.cycle_units)?;
    ensure_out_dir(&args.out)?;
    let log = run_scenario_on(&cfg, &cycle)?;
    let summary = trip_summary(&log);
    write_trip_csv(&args.out.join("trip.csv"), &log)?;
    write_summary_json(&args.out.join("summary.json"), &summary, Some(now_unix_s()))?;
    println!(
        "{} on {}: {} of {} steps, {:.3} L total",
        cfg.strategy,
        log.cycle_name,
        log.logged_steps(),
        log.total_steps,
        summary.fuel.total_l
    );
    match &log.abort {
        Some(a) => {
            eprintln!("run stopped at step {}: {}", a.step, a.message);
            Ok(ExitCode::from(1))
        }
        None => Ok(ExitCode::SUCCESS),
    }
}

fn cmd_compare(args: ScenarioArgs, strategies: Vec<String>) -> Result<ExitCode, Error> {
    let cfg = build_config(&args)?;
    let listed: Vec<Strategy> = if strategies.is_empty() {
        Strategy::ALL.to_vec()
    } else {
        strategies.iter().map(|s| parse_strategy(s)).collect::<Result<_, _>>()?
    };
    let cycle = resolve_cycle(&cfg.cycle, cfg.cycle_units)?;
    ensure_out_dir(&args.out)?;
    let (report, _logs) = compare_listed(&cfg, &cycle, &listed)?;
    write_comparison_json(&args.out.join("comparison.json"), &report, Some(now_unix_s()))?;
    write_comparison_csv(&args.out.join("comparison.csv"), &report)?;
    write_comparison_txt(&args.out.join("comparison.txt"), &report)?;
    print!("{}", comparison_text(&report));
    if report.incomplete {
        eprintln!("comparison incomplete: at least one trip stopped early");
        Ok(ExitCode::from(1))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn cmd_sweep(args: ScenarioArgs, gaps: Vec<f64>) -> Result<ExitCode, Error> {
    let cfg = build_config(&args)?;
    let cycle = resolve_cycle(&cfg.cycle, cfg.cycle_units)?;
    ensure_out_dir(&args.out)?;
    let sweep = sweep_desired_gap(&cfg, &cycle, &gaps)?;
    write_sweep_csv(&args.out.join("sweep.csv"), &sweep)?;
    write_sweep_json(&args.out.join("sweep.json"), &sweep, Some(now_unix_s()))?;
    for p in &sweep.points {
        println!("gap {:5.1} m -> {:.3} L", p.desired_gap_m, p.fuel.total_l);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_selftest() -> ExitCode {
    let results = selfcheck::run_all();
    let mut all_pass = true;
    for r in &results {
        all_pass &= r.pass;
        println!("{} {:<24} {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
