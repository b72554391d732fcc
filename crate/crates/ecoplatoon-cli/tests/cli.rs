//! End-to-end checks of the binary: exit codes, artifacts on disk, and
//! byte-level determinism of repeated invocations.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ecoplatoon"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn selftest_passes() {
    let out = run(&["selftest"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(text.contains("zoh-vs-exponential"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn run_writes_artifacts_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("artifacts");
    let out = run(&[
        "run",
        "--cycle",
        "sawtooth60",
        "--tail-seconds",
        "20",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let csv = std::fs::read_to_string(out_dir.join("trip.csv")).unwrap();
    assert!(csv.starts_with("k,t,truck,v,a,u,gap,dd,dv,P_kW,fuel_Lps\n"));
    let json = std::fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(json.contains("\"strategy\": \"eco-dmpc\""));
    assert!(json.contains("\"generated_unix_s\""));
}

#[test]
fn run_accepts_a_config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("scenario.toml");
    std::fs::write(&cfg_path, "strategy = \"idm\"\ncycle = \"transient600\"\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "run",
        "--config",
        cfg_path.to_str().unwrap(),
        "--cycle",
        "sawtooth60",
        "--tail-seconds",
        "10",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let json = std::fs::read_to_string(out_dir.join("summary.json")).unwrap();
    // strategy from the file, cycle overridden by the flag
    assert!(json.contains("\"strategy\": \"idm\""));
    assert!(json.contains("\"cycle_name\": \"sawtooth60\""));
}

#[test]
fn missing_cycle_file_exits_two_with_the_path() {
    let out = run(&["run", "--cycle", "no-such-trace.csv", "--out", "/tmp/unused"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no-such-trace.csv"));
}

#[test]
fn unknown_strategy_and_bad_config_exit_two() {
    let out = run(&["run", "--strategy", "warp", "--out", "/tmp/unused"]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));

    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.toml");
    std::fs::write(&cfg_path, "no_such_key = 1\n").unwrap();
    let out = run(&["run", "--config", cfg_path.to_str().unwrap(), "--out", "/tmp/unused"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no_such_key"), "stderr: {}", stderr(&out));
}

#[test]
fn sweep_needs_gaps_and_writes_the_curve() {
    let out = run(&["sweep", "--cycle", "sawtooth60", "--out", "/tmp/unused"]);
    assert_eq!(code(&out), 2, "empty gap list is a configuration error");

    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "sweep",
        "--cycle",
        "sawtooth60",
        "--tail-seconds",
        "10",
        "--gap",
        "5",
        "--gap",
        "10",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "gap_m,total_fuel_L");
    assert_eq!(csv.lines().count(), 3);
}

fn strip_timestamp(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.contains("generated_unix_s"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn repeated_compare_is_byte_identical_outside_the_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out_dir: &Path| {
        vec![
            "compare".to_string(),
            "--cycle".into(),
            "sawtooth60".into(),
            "--tail-seconds".into(),
            "20".into(),
            "--out".into(),
            out_dir.to_str().unwrap().to_string(),
        ]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = bin().args(args(&a)).output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let out = bin().args(args(&b)).output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    // text and csv tables carry no clock at all
    assert_eq!(
        std::fs::read(a.join("comparison.txt")).unwrap(),
        std::fs::read(b.join("comparison.txt")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("comparison.csv")).unwrap(),
        std::fs::read(b.join("comparison.csv")).unwrap()
    );
    assert_eq!(
        strip_timestamp(&a.join("comparison.json")),
        strip_timestamp(&b.join("comparison.json"))
    );
}

#[test]
fn compare_accepts_a_strategy_list() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "compare",
        "--cycle",
        "sawtooth60",
        "--tail-seconds",
        "10",
        "--strategy",
        "idm",
        "--strategy",
        "idm",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(text.contains("0.00 %") || text.contains("n/a"), "stdout: {text}");
    let csv = std::fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "two idm rows plus header");
}
