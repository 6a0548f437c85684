use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use gcs_sim::scenario::{Scenario, ScenarioFile};
use gcs_sim_cli::{cmd_check, cmd_run, cmd_sweep, sweep_rows, GridPoint, ParamGrid, EXIT_INVALID, EXIT_PARSE, EXIT_VIOLATIONS};
use serde_json::json;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.json"))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gcs-sim"))
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn two_node(theta: f64, initial: [f64; 2], rates: [f64; 2]) -> String {
    json!({
        "graph": {"n": 2, "d_max": 2.0, "edges": [
            {"u": 0, "v": 1, "fwd_delay": 1.0, "bwd_delay": 1.0, "eps_d": 0.01, "eps_m": 0.2}]},
        "clocks": {"theta": theta, "mu": 0.01, "nodes": [
            {"initial_value": initial[0], "generator": {"kind": "constant", "rate": rates[0]}},
            {"initial_value": initial[1], "generator": {"kind": "constant", "rate": rates[1]}}]},
        "gcs": {"T": 5.0, "T_stab": 2.0, "p_max": 0.1},
        "sim": {"horizon": {"seconds": 3000.0}, "sample_dt": 1.0}
    })
    .to_string()
}

#[test]
fn run_line8_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--scenario"])
        .arg(scenario_path("line8"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    for f in ["trace.csv", "summary.json", "violations.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["violation_count"], 0);
    assert_eq!(summary["bounds"]["local_satisfied"], true);
    assert_eq!(summary["bounds"]["global_satisfied"], true);
    let violations: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(out.join("violations.json")).unwrap()).unwrap();
    assert!(violations.is_empty());
}

#[test]
fn seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmd_run(&scenario_path("random16"), Some(42), dir.path()).unwrap();
    assert_eq!(out.summary.seed, 42);
}

#[test]
fn malformed_json_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.json", "{\n  \"graph\": {\n    \"n\": 2,,\n");
    let o = bin().args(["run", "--scenario"]).arg(&p).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(EXIT_PARSE));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn unknown_key_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&two_node(1.001, [0.0, 0.0], [1.0, 1.0])).unwrap();
    v["gcs"]["T_stabilise"] = json!(3.0);
    let p = write(dir.path(), "typo.json", &v.to_string());
    assert_eq!(cmd_check(&p).unwrap_err().exit_code(), EXIT_PARSE);
}

#[test]
fn initial_skew_beyond_distance_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "skew.json", &two_node(1.001, [0.0, 5.0], [1.0, 1.0]));
    let o = bin().args(["run", "--scenario"]).arg(&p).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(EXIT_INVALID));
    assert!(String::from_utf8_lossy(&o.stderr).contains("initial synchronisation"));
}

#[test]
fn theta_one_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "flat.json", &two_node(1.0, [0.0, 0.0], [1.0, 1.0]));
    let o = bin().args(["check", "--scenario"]).arg(&p).output().unwrap();
    assert_eq!(o.status.code(), Some(EXIT_INVALID));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigma undefined"));
}

#[test]
fn bound_exceedance_exits_4() {
    // One clock at the fastest hardware rate, its neighbour at the slowest.
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "drift.json", &two_node(1.001, [0.0, 0.0], [1.001, 1.0]));
    let err = cmd_run(&p, None, &dir.path().join("out")).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_VIOLATIONS);
    let o = bin().args(["run", "--scenario"]).arg(&p).arg("--out").arg(dir.path().join("o2")).output().unwrap();
    assert_eq!(o.status.code(), Some(EXIT_VIOLATIONS));
}

#[test]
fn check_single_edge_global_bound() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "one.json", &two_node(1.001, [0.0, 0.0], [1.0, 1.0]));
    let r = cmd_check(&p).unwrap();
    let kappa = r.kappa[0].2;
    assert!((kappa - 2.0 * (1.0 * (0.001 + 0.01) + 0.2)).abs() < 1e-12);
    assert!((r.global_bound - (1.0 + 1.0 / (r.sigma - 1.0)) * kappa).abs() < 1e-12);
}

#[test]
fn check_matches_library_bounds() {
    for name in ["line8", "ring12", "grid4x4", "star6", "random16"] {
        let r = cmd_check(&scenario_path(name)).unwrap();
        let sc = Scenario::from_json(&fs::read_to_string(scenario_path(name)).unwrap()).unwrap();
        assert!((r.sigma - sc.bounds.sigma).abs() <= 1e-12);
        assert!((r.global_bound - sc.bounds.global_bound).abs() <= 1e-12);
        assert!((r.local_bound - sc.bounds.local_bound).abs() <= 1e-12);
        assert!((r.weighted_diameter - sc.bounds.weighted_diameter).abs() <= 1e-12);
        assert_eq!(r.s_max, sc.bounds.s_max);
        let o = bin().args(["check", "--scenario"]).arg(scenario_path(name)).output().unwrap();
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(String::from_utf8(o.stdout).unwrap(), r.render());
    }
}

#[test]
fn sweep_one_point_three_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write(dir.path(), "grid.json", r#"{"eps_m": [0.45]}"#);
    let rows = cmd_sweep(&scenario_path("ring12"), &grid, 3, dir.path()).unwrap();
    assert_eq!(rows.len(), 3);
    let seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, vec![1, 2, 3]);
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    for r in &rows {
        assert!(r.error.is_none());
        // ring12 edges: largest delay 2.2, eps_d 0.1, theta 1.001.
        for &ratio in &r.kappa_over_d {
            let want = 2.0 * (0.001 + 0.1) + 2.0 * 0.45 / 2.2;
            assert!((ratio - want).abs() < 1e-12, "{ratio} vs {want}");
        }
        assert!((r.slack_local - (r.bound_local - r.max_local)).abs() < 1e-15);
    }
}

#[test]
fn sweep_records_failures_and_continues() {
    let base = ScenarioFile::from_json(&fs::read_to_string(scenario_path("line8")).unwrap()).unwrap();
    let grid = ParamGrid {
        theta: vec![1.0, 1.001],
        ..Default::default()
    };
    let rows = sweep_rows(&base, &grid, 1);
    assert_eq!(rows.len(), 2);
    assert!(rows[0].error.as_deref().unwrap().contains("sigma undefined"));
    assert!(rows[1].error.is_none());
}

#[test]
fn sweep_over_node_count() {
    let base = ScenarioFile::from_json(&fs::read_to_string(scenario_path("ring12")).unwrap()).unwrap();
    let grid = ParamGrid {
        n: vec![4, 6],
        ..Default::default()
    };
    let rows = sweep_rows(&base, &grid, 1);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.error.is_none()));
    assert_eq!(rows[1].kappa_over_d.len(), 6);
}

#[test]
fn local_skew_shrinks_with_uncertainty() {
    let base: ScenarioFile = serde_json::from_value(json!({
        "graph": {"n": 4, "d_max": 2.0, "family": "line", "edges": [
            {"u": 0, "v": 1, "fwd_delay": 1.0, "bwd_delay": 1.0, "eps_d": 0.1, "eps_m": 0.4},
            {"u": 1, "v": 2, "fwd_delay": 1.0, "bwd_delay": 1.0, "eps_d": 0.1, "eps_m": 0.4},
            {"u": 2, "v": 3, "fwd_delay": 1.0, "bwd_delay": 1.0, "eps_d": 0.1, "eps_m": 0.4}]},
        "clocks": {"theta": 1.01, "mu": 0.05, "nodes": [
            {"initial_value": 0.0, "generator": {"kind": "alternating", "start_fast": true}},
            {"initial_value": 0.0, "generator": {"kind": "alternating", "start_fast": false}},
            {"initial_value": 0.0, "generator": {"kind": "alternating", "start_fast": true}},
            {"initial_value": 0.0, "generator": {"kind": "alternating", "start_fast": false}}]},
        "gcs": {"T": 5.0, "T_stab": 3.0, "p_max": 0.1},
        "sim": {"horizon": {"cycles": 150}, "sample_dt": 1.0, "abort_on_violation": false}
    }))
    .unwrap();
    let steps = [(1.01, 0.1, 0.4), (1.001, 0.01, 0.04), (1.0001, 0.001, 0.004), (1.000001, 0.00001, 0.00004)];
    let mut last = f64::INFINITY;
    for (theta, eps_d, eps_m) in steps {
        // Fast mode overshoots by about mu per cycle, so mu shrinks with the drift (sigma stays 10).
        let gp = GridPoint {
            theta: Some(theta),
            mu: Some(10.0 * (theta - 1.0)),
            eps_d: Some(eps_d),
            eps_m: Some(eps_m),
            ..Default::default()
        };
        let sc = Scenario::new(gp.apply(&base).unwrap()).unwrap();
        let out = gcs_sim::engine::run(&sc).unwrap();
        let skew = out.summary.bounds.max_observed_local;
        assert!(skew > 0.0 && skew < last, "theta {theta}: {skew} not below {last}");
        last = skew;
    }
    assert!(last < 1e-3);
}
