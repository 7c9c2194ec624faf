use std::path::Path;
use std::process::{Command, Output};

use marsma::fixtures::{read_json, write_json, SolutionFixture};
use marsma::harness::{mean_std, parse_csv, CSV_HEADER};
use marsma_core::channel::AntennaPositions;

const SMALL: [&str; 14] = [
    "--set",
    "n_antennas=2",
    "--set",
    "n_users=2",
    "--set",
    "particles=3",
    "--set",
    "iterations=2",
    "--set",
    "restarts=1",
    "--set",
    "sca_max_iterations=5",
    "--set",
    "realizations=2",
];

fn marsma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marsma"))
        .args(args)
        .env("MARSMA_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn run_small(extra: &[&str]) -> Output {
    let mut args = vec!["run", "--seed", "5"];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    marsma(&args)
}

#[test]
fn run_fpa_does_one_inner_solve() {
    let o = run_small(&["--scheme", "fpa_2rsma", "--json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["evaluations"], 1);
    assert!(v["min_rate"].as_f64().unwrap() > 0.0);
    assert_eq!(v["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn saved_solution_validates_and_tampering_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("solution.json");
    let p = path.to_str().unwrap();
    let o = run_small(&["--scheme", "proposed_dnppso", "--save", p]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&marsma(&["validate", p])), 0);

    let mut fx: SolutionFixture = read_json(&path).unwrap();
    let n = fx.positions.as_slice().len();
    fx.positions = AntennaPositions::new(vec![fx.scenario.config.t_min; n]);
    let bad = dir.path().join("bad.json");
    write_json(&bad, &fx).unwrap();
    let o = marsma(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("Spacing"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&marsma(&["frobnicate"])), 2);
    assert_eq!(code(&marsma(&["run", "--scheme", "fpa_2rsma"])), 2);
    assert_eq!(code(&marsma(&["run", "--seed", "1", "--set", "no_such_key=3"])), 2);
    assert_eq!(code(&marsma(&["run", "--seed", "1", "--scheme", "ma_noma"])), 2);
    assert_eq!(code(&run_small(&["--scheme", "fpa_2rsma", "--set", "n_users=0"])), 2);
    let mut args = vec!["trace", "--seed", "1", "--scheme", "fpa_1rsma"];
    args.extend_from_slice(&SMALL);
    assert_eq!(code(&marsma(&args)), 2);
}

#[test]
fn trace_writes_one_row_per_iteration() {
    let mut args = vec!["trace", "--seed", "2"];
    args.extend_from_slice(&SMALL);
    let o = marsma(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("restart,iteration,gbest_fitness,active,evaluations"));
    assert_eq!(lines.count(), 3);
}

fn sweep(dir: &Path, name: &str, workers: &str) -> (String, String) {
    let out = dir.join(format!("{name}.csv"));
    let raw = dir.join(format!("{name}.raw.csv"));
    let mut args = vec![
        "sweep",
        "--seed",
        "11",
        "--workers",
        workers,
        "--out",
        out.to_str().unwrap(),
        "--raw",
        raw.to_str().unwrap(),
        "--set",
        "sweep_axis=n_users",
        "--set",
        "sweep_values=[2, 3]",
        "--set",
        "schemes=[\"fpa_2rsma\", \"fpa_1rsma\", \"proposed_dnppso\"]",
    ];
    args.extend_from_slice(&SMALL[..12]);
    args.extend_from_slice(&["--set", "realizations=3"]);
    let o = marsma(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    (
        std::fs::read_to_string(out).unwrap(),
        std::fs::read_to_string(raw).unwrap(),
    )
}

#[test]
fn sweep_csv_matches_raw_dump_and_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, raw) = sweep(dir.path(), "a", "1");
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER.join(","));
    let rows = parse_csv(csv.as_bytes()).unwrap();
    assert_eq!(rows.len(), 6);

    let mut reader = csv::Reader::from_reader(raw.as_bytes());
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 2 * 3 * 3);
    for row in &rows {
        let values: Vec<f64> = records
            .iter()
            .filter(|r| {
                r[0].parse::<f64>().unwrap() == row.sweep_value && &r[2] == row.scheme.as_str()
            })
            .map(|r| r[3].parse().unwrap())
            .collect();
        let (mean, std) = mean_std(&values);
        assert_eq!(values.len(), row.n);
        assert!((mean - row.mean_minrate).abs() <= 1e-5 * mean.abs().max(1e-9));
        assert!((std - row.std_minrate).abs() <= 1e-5 * std.abs().max(1e-6));
    }
    assert!(records.iter().all(|r| &r[5] == "0"));

    let (again, _) = sweep(dir.path(), "b", "1");
    let (parallel, _) = sweep(dir.path(), "c", "3");
    assert_eq!(csv, again);
    assert_eq!(csv, parallel);
}
