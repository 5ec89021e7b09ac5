//! End-to-end runs of the `velmat` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use velmat::cli::Scenario;

fn velmat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_velmat")).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_scenario(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn telegraph(params: &str, nodes: usize, extra: &str) -> String {
    format!(
        r#"{{"system": {{"name": "telegraph", "params": {params}}},
            "domain": {{"lower": [0], "upper": [1]}}, "grid": {{"nodes": [{nodes}]}},
            {extra} "output": {{"dir": "out"}}}}"#
    )
}

fn verdict(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/verdict.json")).unwrap()).unwrap()
}

#[test]
fn analyze_degenerate_line() {
    let t = tempfile::tempdir().unwrap();
    let p = write_scenario(t.path(), "s.json", &telegraph(r#"{"c": "x*(1-x)"}"#, 512, ""));
    let o = velmat(&["analyze", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = verdict(t.path());
    assert_eq!(v["classification"], "certified-divergent");
    for p in v["parameters"]["pieces"].as_array().unwrap() {
        assert_eq!(p["classification"], "certified-divergent");
    }
    assert_eq!(v["parameters"]["seed"], 0x5eed);
    let summary = fs::read_to_string(t.path().join("out/summary.txt")).unwrap();
    assert!(summary.contains("one-dimensional line criterion"));
    let csv = fs::read_to_string(t.path().join("out/velocity.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "x1,M11");
    assert_eq!(csv.lines().count(), 513);
}

#[test]
fn analyze_constant_line() {
    let t = tempfile::tempdir().unwrap();
    let p = write_scenario(t.path(), "s.json", &telegraph(r#"{"L": "1", "C": "1"}"#, 1024, ""));
    let o = velmat(&["analyze", p.to_str().unwrap(), "--strict"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = verdict(t.path());
    assert_eq!(v["classification"], "likely-convergent");
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.contains("sufficient condition"), "{s}");
}

#[test]
fn csv_values_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let p = write_scenario(t.path(), "s.json", &telegraph(r#"{"c": "1 + 0.3*sin(x)"}"#, 64, ""));
    assert_eq!(code(&velmat(&["analyze", p.to_str().unwrap()])), 0);
    let csv = fs::read_to_string(t.path().join("out/velocity.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let x = (0.5f64) / 64.0;
    assert_eq!(row[0], x);
    let c = 1.0 + 0.3 * x.sin();
    assert!((row[1] - 2.0 * c * c).abs() <= 1e-15 * row[1]);
}

#[test]
fn distance_modes() {
    let t = tempfile::tempdir().unwrap();
    let p = write_scenario(t.path(), "s.json", &telegraph(r#"{"L": "1", "C": "1"}"#, 256, r#""analysis": {"probe": [0.5]},"#));
    for (mode, scale) in [("arrival", 1.0 / 2f64.sqrt()), ("geodesic", 1.0 / (2.2f64 + 2e-12).sqrt())] {
        let o = velmat(&["distance", p.to_str().unwrap(), "--mode", mode]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let csv = fs::read_to_string(t.path().join("out/distance.csv")).unwrap();
        let rows: Vec<(f64, f64)> = csv
            .lines()
            .skip(1)
            .map(|l| {
                let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
                (v[0], v[1])
            })
            .collect();
        let (x0, _) = rows.iter().copied().find(|r| r.1 == 0.0).unwrap();
        for (x, d) in rows {
            let exact = (x - x0).abs() * scale;
            assert!((d - exact).abs() <= 1e-9 * exact.max(1.0), "{mode}: {d} vs {exact} at {x}");
        }
    }
}

#[test]
fn simulate_writes_log_and_snapshot() {
    let t = tempfile::tempdir().unwrap();
    let extra = r#""simulate": {"T": 0.1, "cfl": 0.4, "pulse": {"center": [0.5], "sigma": 0.03, "components": [1, 1]}},"#;
    let p = write_scenario(t.path(), "s.json", &telegraph(r#"{"L": "1", "C": "2"}"#, 256, extra));
    let o = velmat(&["simulate", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(t.path().join("out/evolution.csv")).unwrap();
    assert!(log.lines().next().unwrap().starts_with("t,energy"));
    let energies: Vec<f64> = log.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    let drift = energies.iter().map(|e| (e - energies[0]).abs()).fold(0.0, f64::max) / energies[0];
    assert!(drift <= 1e-6, "{drift}");
    let snap = fs::read_to_string(t.path().join("out/snapshot.csv")).unwrap();
    assert_eq!(snap.lines().next().unwrap(), "x1,re1,im1,re2,im2");
    assert_eq!(snap.lines().count(), 257);
}

#[test]
fn scenario_errors_exit_2() {
    let t = tempfile::tempdir().unwrap();
    let typo = telegraph(r#"{"L": "1", "C": "1"}"#, 64, "").replace("\"grid\"", "\"gird\"");
    let p = write_scenario(t.path(), "typo.json", &typo);
    let o = velmat(&["analyze", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo.json"));

    let p = write_scenario(t.path(), "expr.json", &telegraph(r#"{"L": "2x", "C": "1"}"#, 64, ""));
    let o = velmat(&["analyze", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("byte 2"));

    let o = velmat(&["analyze", t.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    let p = write_scenario(t.path(), "coarse.json", &telegraph(r#"{"L": "1", "C": "1"}"#, 4, ""));
    assert_eq!(code(&velmat(&["distance", p.to_str().unwrap()])), 2);
}

#[test]
fn verify_filter_fault_and_strict() {
    let o = velmat(&["verify", "--filter", "^velocity\\.", "--samples", "40"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let out = String::from_utf8_lossy(&o.stdout);
    let rows: Vec<&str> = out.lines().filter(|l| l.contains(" pass") || l.contains(" FAIL")).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|l| l.starts_with("velocity.")), "{out}");

    let o = velmat(&["verify", "--filter", "majorant", "--inject-fault", "majorant", "--samples", "40"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));

    assert_eq!(code(&velmat(&["verify", "--filter", "no-such-check", "--strict"])), 4);
    assert_eq!(code(&velmat(&["verify", "--filter", "no-such-check"])), 0);

    let o = velmat(&["verify", "--filter", "^dsl", "--seed", "0x1234"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("seed 0x1234"));
}

#[test]
fn rewritten_scenario_gives_identical_reports() {
    let t = tempfile::tempdir().unwrap();
    let body = telegraph(r#"{"c": "sin(pi*x)^2"}"#, 256, r#""analysis": {"delta": 0.2, "cutoffs": 20},"#);
    let p1 = write_scenario(t.path(), "a.json", &body);
    assert_eq!(code(&velmat(&["analyze", p1.to_str().unwrap()])), 0);
    let first = fs::read(t.path().join("out/verdict.json")).unwrap();
    let first_csv = fs::read(t.path().join("out/velocity.csv")).unwrap();

    let s = Scenario::load(&p1).unwrap();
    let mut again = s.clone();
    again.output.dir = PathBuf::from("out");
    let p2 = write_scenario(t.path(), "b.json", &again.to_json());
    fs::remove_dir_all(t.path().join("out")).unwrap();
    assert_eq!(code(&velmat(&["analyze", p2.to_str().unwrap()])), 0);
    assert_eq!(fs::read(t.path().join("out/verdict.json")).unwrap(), first);
    assert_eq!(fs::read(t.path().join("out/velocity.csv")).unwrap(), first_csv);
}

#[test]
fn bundled_scenarios_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") {
            let s = Scenario::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            s.build_system().unwrap();
            n += 1;
        }
    }
    assert!(n >= 5);
}
