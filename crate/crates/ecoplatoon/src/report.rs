//! Trip post-processing: fuel totals, gap statistics, stability metrics,
//! strategy comparisons, a desired-gap sweep, and the file writers behind
//! the command-line artifacts.
//!
//! Fuel and gap statistics cover the drive-cycle window only; the
//! constant-speed tail exists to expose convergence and is excluded from
//! economy numbers.  Stability metrics look at the whole trip.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::baselines::COLUMN_SIZE;
use crate::cycle::DriveCycle;
use crate::error::Error;
use crate::fuel::trip_fuel;
use crate::sim::{run_scenario_on, Abort, ScenarioConfig, Strategy, TripLog};
use crate::Result;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Followers converge once spacing error, speed error, and acceleration all
/// sit below this magnitude.
pub const CALM_EPS: f64 = 0.01;

/// Per-truck and total fuel over the drive-cycle window, in litres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelReport {
    pub per_truck_l: [f64; COLUMN_SIZE],
    pub total_l: f64,
}

/// Litres burned inside the cycle window (or up to the abort point).
pub fn fuel_report(log: &TripLog) -> FuelReport {
    let window = log.cycle_steps.min(log.logged_steps());
    let mut per_truck_l = [0.0; COLUMN_SIZE];
    for (i, t) in log.trucks.iter().enumerate() {
        per_truck_l[i] = trip_fuel(&t.fuel_l_s[..window], log.ts_s);
    }
    FuelReport { per_truck_l, total_l: per_truck_l.iter().sum() }
}

/// Relative saving of `new` against `base`, in percent of `base`.
pub fn improvement_pct(base_l: f64, new_l: f64) -> f64 {
    (base_l - new_l) / base_l * 100.0
}

/// Mean realized gap over the cycle window.  The lead truck's cushion gap is
/// included or excluded per the scenario's reporting flag.
pub fn average_gap(log: &TripLog) -> f64 {
    let window = log.cycle_steps.min(log.logged_steps());
    let first = if log.config.average_gap_includes_leader { 0 } else { 1 };
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in &log.trucks[first..] {
        sum += t.gap_m[..window].iter().sum::<f64>();
        n += window;
    }
    sum / n as f64
}

/// Follower error metrics over a whole trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// peak |spacing error| per trailing truck, front to rear
    pub linf_m: [f64; COLUMN_SIZE - 1],
    /// peaks do not grow toward the rear (1e-6 slack)
    pub string_stable: bool,
    /// every trailing truck settled below `CALM_EPS` in error states and
    /// acceleration by the end of the trip and stayed there
    pub converged: bool,
    /// seconds after tail start until the column was calm for good;
    /// `None` when the trip aborted or never settled
    pub settle_time_s: Option<f64>,
}

/// Computes the stability metrics of one trip.
pub fn stability_report(log: &TripLog) -> StabilityReport {
    let steps = log.logged_steps();
    let mut linf_m = [0.0f64; COLUMN_SIZE - 1];
    for i in 1..COLUMN_SIZE {
        linf_m[i - 1] = log.trucks[i].spacing_err_m.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    }
    let string_stable = linf_m.windows(2).all(|w| w[1] <= w[0] + 1e-6);

    let complete = log.abort.is_none() && steps == log.total_steps;
    let calm_at = |k: usize| -> bool {
        log.trucks[1..].iter().all(|t| {
            t.spacing_err_m[k].abs() < CALM_EPS
                && t.speed_err_m_s[k].abs() < CALM_EPS
                && t.accel_m_s2[k].abs() < CALM_EPS
        })
    };
    // earliest step from which the column stays calm through the end
    let mut calm_from = steps;
    for k in (0..steps).rev() {
        if calm_at(k) {
            calm_from = k;
        } else {
            break;
        }
    }
    let converged = complete && calm_from < steps;
    let settle_time_s = if converged {
        Some(log.ts_s * calm_from.saturating_sub(log.cycle_steps) as f64)
    } else {
        None
    };
    StabilityReport { linf_m, string_stable, converged, settle_time_s }
}

/// One strategy's line in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub fuel: FuelReport,
    pub average_gap_m: f64,
    pub stability: StabilityReport,
    pub soften_events: [usize; COLUMN_SIZE],
    pub abort: Option<Abort>,
    /// fuel saved relative to the first listed run, in percent of that
    /// run's total; `None` when either trip aborted
    pub saving_vs_first_pct: Option<f64>,
}

/// Several strategies over one cycle, with the fuel-saving percentages of
/// the preview controller against both baselines when they took part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub cycle_name: String,
    pub ts_s: f64,
    /// summaries in the order the strategies were listed
    pub strategies: Vec<StrategySummary>,
    pub eco_vs_dmpc_pct: Option<f64>,
    pub eco_vs_idm_pct: Option<f64>,
    /// true when any trip stopped early; its partial numbers stay listed
    pub incomplete: bool,
}

fn summarize(log: &TripLog) -> StrategySummary {
    StrategySummary {
        strategy: log.config.strategy,
        fuel: fuel_report(log),
        average_gap_m: average_gap(log),
        stability: stability_report(log),
        soften_events: log.soften_events,
        abort: log.abort.clone(),
        saving_vs_first_pct: None,
    }
}

fn assemble_comparison(cycle_name: &str, ts_s: f64, logs: &[TripLog]) -> ComparisonReport {
    let mut strategies: Vec<StrategySummary> = logs.iter().map(summarize).collect();
    let first = strategies[0].clone();
    for s in &mut strategies {
        if first.abort.is_none() && s.abort.is_none() {
            s.saving_vs_first_pct = Some(improvement_pct(first.fuel.total_l, s.fuel.total_l));
        }
    }
    let complete_total = |wanted: Strategy| {
        strategies
            .iter()
            .find(|s| s.strategy == wanted && s.abort.is_none())
            .map(|s| s.fuel.total_l)
    };
    let eco = complete_total(Strategy::EcoDmpc);
    let vs = |base: Option<f64>| match (base, eco) {
        (Some(b), Some(e)) => Some(improvement_pct(b, e)),
        _ => None,
    };
    ComparisonReport {
        cycle_name: cycle_name.to_string(),
        ts_s,
        eco_vs_dmpc_pct: vs(complete_total(Strategy::Dmpc)),
        eco_vs_idm_pct: vs(complete_total(Strategy::Idm)),
        incomplete: strategies.iter().any(|s| s.abort.is_some()),
        strategies,
    }
}

/// Runs every strategy over the same cycle and collates the results.
/// An aborted trip leaves its partial numbers in the report and marks it
/// incomplete rather than failing the whole comparison.
pub fn compare_strategies(
    cfg: &ScenarioConfig,
    cycle: &DriveCycle,
) -> Result<(ComparisonReport, Vec<TripLog>)> {
    compare_listed(cfg, cycle, &Strategy::ALL)
}

/// `compare_strategies` over an explicit strategy list (repeats allowed;
/// a strategy compared against itself reports a zero saving).
pub fn compare_listed(
    cfg: &ScenarioConfig,
    cycle: &DriveCycle,
    strategies: &[Strategy],
) -> Result<(ComparisonReport, Vec<TripLog>)> {
    if strategies.is_empty() {
        return Err(Error::Config("comparison needs at least one strategy".into()));
    }
    let cfgs: Vec<ScenarioConfig> =
        strategies.iter().map(|&strategy| ScenarioConfig { strategy, ..cfg.clone() }).collect();
    let logs = run_batch(&cfgs, cycle)?;
    Ok((assemble_comparison(&cycle.name, cfg.ts_s, &logs), logs))
}

/// One sampled point of the desired-gap sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSweepPoint {
    pub desired_gap_m: f64,
    pub fuel: FuelReport,
    pub average_gap_m: f64,
}

/// Fuel versus commanded formation gap for the preview controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSweep {
    pub cycle_name: String,
    pub points: Vec<GapSweepPoint>,
}

/// Reruns the preview strategy at each desired gap and reports fuel.
/// Tighter formation means more slipstream, so fuel should grow with the
/// gap; the caller asserts that, this function only measures.
pub fn sweep_desired_gap(
    cfg: &ScenarioConfig,
    cycle: &DriveCycle,
    gaps_m: &[f64],
) -> Result<GapSweep> {
    if gaps_m.is_empty() {
        return Err(Error::Config("gap sweep needs at least one gap".into()));
    }
    for &g in gaps_m {
        if !(g > 0.0) {
            return Err(Error::Config(format!("swept gap must be positive, got {g}")));
        }
    }
    let cfgs: Vec<ScenarioConfig> = gaps_m
        .iter()
        .map(|&g| ScenarioConfig { strategy: Strategy::EcoDmpc, desired_gap_m: g, ..cfg.clone() })
        .collect();
    let logs = run_batch(&cfgs, cycle)?;
    let mut points = Vec::with_capacity(logs.len());
    for log in &logs {
        if let Some(a) = &log.abort {
            return Err(Error::Aborted {
                step: a.step,
                message: format!("gap {} m run: {}", log.config.desired_gap_m, a.message),
            });
        }
        points.push(GapSweepPoint {
            desired_gap_m: log.config.desired_gap_m,
            fuel: fuel_report(log),
            average_gap_m: average_gap(log),
        });
    }
    Ok(GapSweep { cycle_name: cycle.name.clone(), points })
}

/// Runs a batch of scenarios over one cycle, in input order.
///
/// With the `parallel` feature the trips run on the rayon pool; results are
/// identical either way, the order of side effects is not observable.
pub fn run_batch(cfgs: &[ScenarioConfig], cycle: &DriveCycle) -> Result<Vec<TripLog>> {
    #[cfg(feature = "parallel")]
    {
        cfgs.par_iter().map(|c| run_scenario_on(c, cycle)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_serial(cfgs, cycle)
    }
}

/// Single-threaded batch runner, always available for comparison runs.
pub fn run_batch_serial(cfgs: &[ScenarioConfig], cycle: &DriveCycle) -> Result<Vec<TripLog>> {
    cfgs.iter().map(|c| run_scenario_on(c, cycle)).collect()
}

/// Standalone summary of a single trip, the `run` artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripSummary {
    pub strategy: Strategy,
    pub cycle_name: String,
    pub ts_s: f64,
    pub cycle_steps: usize,
    pub logged_steps: usize,
    pub fuel: FuelReport,
    pub average_gap_m: f64,
    pub stability: StabilityReport,
    pub soften_events: [usize; COLUMN_SIZE],
    pub abort: Option<Abort>,
}

/// Builds the summary of one trip log.
pub fn trip_summary(log: &TripLog) -> TripSummary {
    TripSummary {
        strategy: log.config.strategy,
        cycle_name: log.cycle_name.clone(),
        ts_s: log.ts_s,
        cycle_steps: log.cycle_steps,
        logged_steps: log.logged_steps(),
        fuel: fuel_report(log),
        average_gap_m: average_gap(log),
        stability: stability_report(log),
        soften_events: log.soften_events,
        abort: log.abort.clone(),
    }
}

/// Wrapper that isolates the only nondeterministic artifact field.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    /// wall-clock seconds at write time; every other field is a pure
    /// function of the inputs
    generated_unix_s: Option<u64>,
    #[serde(flatten)]
    body: &'a T,
}

/// Current wall clock for artifact stamping.
pub fn now_unix_s() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io { path: path.to_path_buf(), source };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    std::fs::write(tmp, bytes).map_err(io_err)?;
    std::fs::rename(tmp, path).map_err(io_err)
}

fn to_stamped_json<T: Serialize>(body: &T, timestamp: Option<u64>) -> String {
    let mut text = serde_json::to_string_pretty(&Stamped { generated_unix_s: timestamp, body })
        .expect("report types serialize");
    text.push('\n');
    text
}

/// Writes a JSON summary; `timestamp` lands in the isolated
/// `generated_unix_s` field, everything else is deterministic.
pub fn write_summary_json(
    path: &Path,
    summary: &TripSummary,
    timestamp: Option<u64>,
) -> Result<()> {
    write_atomic(path, to_stamped_json(summary, timestamp).as_bytes())
}

/// Writes a comparison report as JSON, timestamp isolated as above.
pub fn write_comparison_json(
    path: &Path,
    report: &ComparisonReport,
    timestamp: Option<u64>,
) -> Result<()> {
    write_atomic(path, to_stamped_json(report, timestamp).as_bytes())
}

/// Writes a gap sweep as JSON, timestamp isolated as above.
pub fn write_sweep_json(path: &Path, sweep: &GapSweep, timestamp: Option<u64>) -> Result<()> {
    write_atomic(path, to_stamped_json(sweep, timestamp).as_bytes())
}

/// Writes the per-step trip table: one row per truck per step.
pub fn write_trip_csv(path: &Path, log: &TripLog) -> Result<()> {
    let mut out = String::new();
    out.push_str("k,t,truck,v,a,u,gap,dd,dv,P_kW,fuel_Lps\n");
    for k in 0..log.logged_steps() {
        let t = k as f64 * log.ts_s;
        for (i, truck) in log.trucks.iter().enumerate() {
            let _ = writeln!(
                out,
                "{k},{t},{i},{},{},{},{},{},{},{},{}",
                truck.speed_m_s[k],
                truck.accel_m_s2[k],
                truck.input_m_s2[k],
                truck.gap_m[k],
                truck.spacing_err_m[k],
                truck.speed_err_m_s[k],
                truck.power_kw[k],
                truck.fuel_l_s[k],
            );
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Writes the sweep as a plot-ready two-column CSV; the JSON artifact
/// carries the per-truck detail.
pub fn write_sweep_csv(path: &Path, sweep: &GapSweep) -> Result<()> {
    let mut out = String::new();
    out.push_str("gap_m,total_fuel_L\n");
    for p in &sweep.points {
        let _ = writeln!(out, "{},{}", p.desired_gap_m, p.fuel.total_l);
    }
    write_atomic(path, out.as_bytes())
}

/// Renders the comparison as a fixed-width text table.
pub fn comparison_text(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "cycle: {}  (Ts = {} s)", report.cycle_name, report.ts_s);
    if report.incomplete {
        let _ = writeln!(out, "INCOMPLETE: at least one trip stopped early, see the flagged rows");
    }
    let _ = writeln!(
        out,
        "{:<10} {:>9} {:>9} {:>9} {:>9} {:>9} {:>10} {:>8}",
        "strategy", "lead L", "truck1 L", "truck2 L", "truck3 L", "total L", "avg gap m", "soften"
    );
    for s in &report.strategies {
        let f = &s.fuel.per_truck_l;
        let _ = writeln!(
            out,
            "{:<10} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>10.2} {:>8}{}",
            s.strategy.label(),
            f[0],
            f[1],
            f[2],
            f[3],
            s.fuel.total_l,
            s.average_gap_m,
            s.soften_events.iter().sum::<usize>(),
            match &s.abort {
                Some(a) => format!("  ABORTED at step {}: {}", a.step, a.message),
                None => String::new(),
            },
        );
    }
    let pct = |x: Option<f64>| match x {
        Some(v) => format!("{v:.2} %"),
        None => "n/a".to_string(),
    };
    let _ = writeln!(out, "preview saving vs formation tracker: {}", pct(report.eco_vs_dmpc_pct));
    let _ = writeln!(out, "preview saving vs human drivers:     {}", pct(report.eco_vs_idm_pct));
    for s in &report.strategies {
        let l = &s.stability.linf_m;
        let _ = writeln!(
            out,
            "{:<10} peak |dd| by truck: {:.3} / {:.3} / {:.3} m  string stable: {}",
            s.strategy.label(),
            l[0],
            l[1],
            l[2],
            if s.stability.string_stable { "yes" } else { "no" },
        );
    }
    out
}

/// Writes the comparison fuel table as CSV, one row per strategy.
pub fn write_comparison_csv(path: &Path, report: &ComparisonReport) -> Result<()> {
    let mut out = String::new();
    out.push_str(
        "strategy,lead_l,truck1_l,truck2_l,truck3_l,total_l,avg_gap_m,\
         linf1_m,linf2_m,linf3_m,string_stable,converged,soften_events,aborted\n",
    );
    for s in &report.strategies {
        let f = &s.fuel.per_truck_l;
        let l = &s.stability.linf_m;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.strategy.label(),
            f[0],
            f[1],
            f[2],
            f[3],
            s.fuel.total_l,
            s.average_gap_m,
            l[0],
            l[1],
            l[2],
            s.stability.string_stable,
            s.stability.converged,
            s.soften_events.iter().sum::<usize>(),
            s.abort.is_some(),
        );
    }
    write_atomic(path, out.as_bytes())
}

/// Writes the text rendering of a comparison.
pub fn write_comparison_txt(path: &Path, report: &ComparisonReport) -> Result<()> {
    write_atomic(path, comparison_text(report).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle::sawtooth60;
    use approx::assert_abs_diff_eq;

    fn small_cfg(strategy: Strategy) -> ScenarioConfig {
        ScenarioConfig { strategy, tail_s: 40.0, ..ScenarioConfig::default() }
    }

    fn sawtooth_log(strategy: Strategy) -> TripLog {
        run_scenario_on(&small_cfg(strategy), &sawtooth60()).unwrap()
    }

    #[test]
    fn fuel_report_matches_manual_sum() {
        let log = sawtooth_log(Strategy::Dmpc);
        let report = fuel_report(&log);
        for i in 0..COLUMN_SIZE {
            let manual: f64 =
                log.trucks[i].fuel_l_s[..log.cycle_steps].iter().sum::<f64>() * log.ts_s;
            assert_abs_diff_eq!(report.per_truck_l[i], manual, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(
            report.total_l,
            report.per_truck_l.iter().sum::<f64>(),
            epsilon = 1e-12
        );
        assert!(report.total_l > 0.0);
    }

    #[test]
    fn improvement_is_relative_to_the_baseline() {
        assert_abs_diff_eq!(improvement_pct(50.0, 40.0), 20.0);
        assert_abs_diff_eq!(improvement_pct(40.0, 50.0), -25.0);
        // table-cell formula: litres saved over the baseline's litres
        assert_abs_diff_eq!(improvement_pct(48.80, 40.28), 17.459, epsilon = 5e-4);
    }

    #[test]
    fn average_gap_honours_the_leader_flag() {
        let log = sawtooth_log(Strategy::EcoDmpc);
        let with = average_gap(&log);
        let mut log2 = log.clone();
        log2.config.average_gap_includes_leader = false;
        let without = average_gap(&log2);
        // preview leader's cushion is far wider than the 5 m formation gap
        assert!(with > without);
        assert_abs_diff_eq!(without, 5.0, epsilon = 0.3);
    }

    #[test]
    fn stability_metrics_on_a_converged_trip() {
        // the full-length cycle has a gentle pull-away, so the bound
        // recursion is never outrun and the peaks decay down the column
        let log = crate::sim::run_scenario(&ScenarioConfig::default()).unwrap();
        let s = stability_report(&log);
        assert!(s.string_stable, "peaks were {:?}", s.linf_m);
        assert!(s.converged);
        let settle = s.settle_time_s.unwrap();
        assert!((0.0..=30.0).contains(&settle), "settled after {settle} s");
        assert!(s.linf_m.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn aborted_trip_is_never_converged() {
        let mut log = sawtooth_log(Strategy::EcoDmpc);
        log.abort = Some(Abort { step: 3, message: "test".into() });
        let s = stability_report(&log);
        assert!(!s.converged);
        assert_eq!(s.settle_time_s, None);
    }

    #[test]
    fn comparison_runs_all_strategies_and_orders_fuel() {
        let (report, logs) =
            compare_strategies(&small_cfg(Strategy::EcoDmpc), &sawtooth60()).unwrap();
        assert_eq!(logs.len(), Strategy::ALL.len());
        assert_eq!(report.strategies.len(), Strategy::ALL.len());
        for (s, log) in report.strategies.iter().zip(&logs) {
            assert_eq!(s.strategy, log.config.strategy);
            assert!(s.abort.is_none());
        }
        assert!(!report.incomplete);
        // first row measures against itself
        assert_abs_diff_eq!(report.strategies[0].saving_vs_first_pct.unwrap(), 0.0);
        // the preview controller must not lose to its own formation baseline
        assert!(report.eco_vs_dmpc_pct.unwrap() > 0.0);
    }

    #[test]
    fn repeated_strategy_compares_to_itself_at_zero() {
        let (report, _) = compare_listed(
            &small_cfg(Strategy::Idm),
            &sawtooth60(),
            &[Strategy::Idm, Strategy::Idm],
        )
        .unwrap();
        for s in &report.strategies {
            assert_abs_diff_eq!(s.saving_vs_first_pct.unwrap(), 0.0, epsilon = 1e-12);
        }
        // no preview or formation runs took part, so no table deltas
        assert_eq!(report.eco_vs_dmpc_pct, None);
        assert_eq!(report.eco_vs_idm_pct, None);
    }

    #[test]
    fn aborted_sub_run_flags_the_comparison_incomplete() {
        let cfgs: Vec<ScenarioConfig> = Strategy::ALL.iter().map(|&s| small_cfg(s)).collect();
        let mut logs = run_batch(&cfgs, &sawtooth60()).unwrap();
        logs[1].abort = Some(Abort { step: 9, message: "induced".into() });
        let report = assemble_comparison("sawtooth60", 1.0, &logs);
        assert!(report.incomplete);
        assert!(report.strategies[1].abort.is_some());
        assert_eq!(report.strategies[1].saving_vs_first_pct, None);
        assert!(report.strategies[0].saving_vs_first_pct.is_some());
        // formation tracker aborted, human baseline still comparable
        assert_eq!(report.eco_vs_dmpc_pct, None);
        assert!(report.eco_vs_idm_pct.is_some());
        let text = comparison_text(&report);
        assert!(text.contains("INCOMPLETE"));
        assert!(text.contains("ABORTED at step 9"));
    }

    #[test]
    fn batch_runners_agree() {
        let cfgs: Vec<ScenarioConfig> = Strategy::ALL.iter().map(|&s| small_cfg(s)).collect();
        let parallel = run_batch(&cfgs, &sawtooth60()).unwrap();
        let serial = run_batch_serial(&cfgs, &sawtooth60()).unwrap();
        assert_eq!(parallel, serial);
    }

    #[test]
    fn sweep_rejects_bad_gaps_and_measures_good_ones() {
        assert!(sweep_desired_gap(&small_cfg(Strategy::EcoDmpc), &sawtooth60(), &[]).is_err());
        assert!(
            sweep_desired_gap(&small_cfg(Strategy::EcoDmpc), &sawtooth60(), &[5.0, -1.0]).is_err()
        );
        let sweep =
            sweep_desired_gap(&small_cfg(Strategy::Idm), &sawtooth60(), &[5.0, 15.0]).unwrap();
        assert_eq!(sweep.points.len(), 2);
        // the sweep pins the strategy to the preview controller regardless
        // of what the base config says, so fuel responds to the gap
        assert_abs_diff_eq!(sweep.points[0].desired_gap_m, 5.0);
        assert_abs_diff_eq!(sweep.points[1].desired_gap_m, 15.0);
        assert!(sweep.points[1].fuel.total_l > sweep.points[0].fuel.total_l);
    }

    #[test]
    fn artifacts_round_trip_and_identical_without_timestamp() {
        let dir = std::env::temp_dir().join("ecoplatoon-report-test");
        std::fs::create_dir_all(&dir).unwrap();
        let log = sawtooth_log(Strategy::EcoDmpc);
        let summary = trip_summary(&log);

        let j1 = dir.join("summary1.json");
        let j2 = dir.join("summary2.json");
        write_summary_json(&j1, &summary, None).unwrap();
        write_summary_json(&j2, &summary, None).unwrap();
        let b1 = std::fs::read(&j1).unwrap();
        assert_eq!(b1, std::fs::read(&j2).unwrap());
        assert!(String::from_utf8(b1).unwrap().contains("\"generated_unix_s\": null"));

        let stamped = dir.join("summary3.json");
        write_summary_json(&stamped, &summary, Some(7)).unwrap();
        let text = std::fs::read_to_string(&stamped).unwrap();
        assert!(text.contains("\"generated_unix_s\": 7"));

        let csv = dir.join("trip.csv");
        write_trip_csv(&csv, &log).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "k,t,truck,v,a,u,gap,dd,dv,P_kW,fuel_Lps");
        assert_eq!(text.lines().count(), 1 + COLUMN_SIZE * log.logged_steps());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn comparison_text_has_all_strategy_rows() {
        let (report, _) = compare_strategies(&small_cfg(Strategy::EcoDmpc), &sawtooth60()).unwrap();
        let text = comparison_text(&report);
        for s in Strategy::ALL {
            assert!(text.contains(s.label()), "missing {} in:\n{text}", s.label());
        }
        assert!(text.contains("saving"));
    }
}
