use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn circlaw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circlaw")).args(args).env_remove("CIRCLAW_THREADS").output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}\nstderr: {}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

fn error_kind(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["format_version"], "circlaw-report/1");
    assert_eq!(v["error"]["exit_code"].as_i64().unwrap() as i32, out.status.code().unwrap());
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn csv_rows(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let lines: Vec<String> = text.lines().map(String::from).collect();
    assert_eq!(lines[0], "# format_version: circlaw-report/1");
    assert!(lines[1].starts_with("# config: {"));
    lines[3..].to_vec()
}

#[test]
fn solve_constant_profile() {
    let out = circlaw(&["solve", "--profile", "constant", "--n", "50", "--eta", "1", "--tau", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["format_version"], "circlaw-report/1");
    assert_eq!(v["config"]["command"], "solve");
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    for x in floats(&v["result"]["report"]["v1"]).into_iter().chain(floats(&v["result"]["report"]["v2"])) {
        assert!((x - golden).abs() < 1e-10);
    }
    assert!(floats(&v["result"]["report"]["v1"]).iter().all(|x| format!("{x:.6}") == "0.618034"));

    let out = circlaw(&["solve", "--limit", "--tau", "0.75", "--profile", "constant", "--n", "50"]);
    assert_eq!(out.status.code(), Some(0));
    for x in floats(&json(&out)["result"]["report"]["v1"]) {
        assert!((x - 0.5).abs() < 1e-10);
    }
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "0.1,0.2\n0.3,abc\n").unwrap();
    let out = circlaw(&["solve", "--profile", bad.to_str().unwrap(), "--eta", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "profile-parse");

    let out = circlaw(&["solve", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "missing-argument");

    let out = circlaw(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "usage");

    let out = circlaw(&["density", "--tau-grid", "0:1"]);
    assert_eq!(out.status.code(), Some(2));

    // a precondition on tau, so an input error
    let out = circlaw(&["solve", "--limit", "--tau", "0.99", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "edge-too-close");

    let out = circlaw(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("montecarlo"));
}

#[test]
fn density_grid_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = circlaw(&[
        "density", "--profile", "constant", "--n", "30", "--tau-grid", "0:0.9:10", "--method", "both", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let r = &v["result"]["report"];
    assert!(r["max_cross_method_gap"].as_f64().unwrap() <= 1e-4);
    assert!((r["total_mass"].as_f64().unwrap() - 1.0).abs() <= 5e-3);
    assert_eq!(csv_rows(&dir.path().join("density.csv")).len(), 10);
    let file: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("density.json")).unwrap()).unwrap();
    assert_eq!(file, v);
}

#[test]
fn locallaw_auto_eta() {
    let out = circlaw(&["montecarlo", "locallaw", "--n", "100", "--z", "0.3", "--eta", "auto", "--trials", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let r = &v["result"]["report"];
    assert!((r["eta"].as_f64().unwrap() - 0.1).abs() < 1e-15);
    assert_eq!(r["regime"], "bulk");
    assert_eq!(v["config"]["params"]["eta_auto"], true);
    assert_eq!(r["trials"].as_array().unwrap().len(), 3);
}

#[test]
fn radius_reports_quantiles() {
    let out = circlaw(&["montecarlo", "radius", "--n", "80", "--trials", "4", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = &json(&out)["result"]["report"];
    let q = r["quantiles"].as_array().unwrap();
    assert_eq!(q.len(), 5);
    let vals: Vec<f64> = q.iter().map(|p| p[1].as_f64().unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(r["radii"].as_array().unwrap().len(), 4);
}

#[test]
fn histogram_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let args = ["montecarlo", "histogram", "--profile", "twoblock", "--n", "120", "--trials", "3", "--seed", "7", "--out", d];
    let a = circlaw(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let json_a = std::fs::read(dir.path().join("histogram.json")).unwrap();
    let csv_a = std::fs::read(dir.path().join("histogram.csv")).unwrap();
    let b = Command::new(env!("CARGO_BIN_EXE_circlaw")).args(args).env("CIRCLAW_THREADS", "1").output().unwrap();
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(json_a, std::fs::read(dir.path().join("histogram.json")).unwrap());
    assert_eq!(csv_a, std::fs::read(dir.path().join("histogram.csv")).unwrap());
    assert!(!String::from_utf8_lossy(&a.stdout).contains("threads"));
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "profile = \"twoblock:3,1,0.5\"\nn = 24\neta = 0.5\ntau = 0.2\n").unwrap();
    let c = cfg.to_str().unwrap();
    let v = json(&circlaw(&["solve", "--config", c]));
    assert_eq!(v["config"]["n"], 24);
    assert_eq!(v["config"]["profile"]["kind"], "two-block");
    assert_eq!(v["config"]["params"]["eta"].as_f64(), Some(0.5));

    let v = json(&circlaw(&["solve", "--config", c, "--n", "10", "--eta", "2"]));
    assert_eq!(v["config"]["n"], 10);
    assert_eq!(v["config"]["params"]["eta"].as_f64(), Some(2.0));
    assert_eq!(v["config"]["params"]["tau"].as_f64(), Some(0.2));
    assert_eq!(v["result"]["report"]["v1"].as_array().unwrap().len(), 10);

    std::fs::write(&cfg, "n = 10\nunknown_key = 1\n").unwrap();
    let out = circlaw(&["solve", "--config", c, "--eta", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_mode_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("caps.toml");
    std::fs::write(&cfg, "[caps]\nradius_band = 1e-6\n").unwrap();
    let c = cfg.to_str().unwrap();
    let args = ["montecarlo", "radius", "--config", c, "--n", "40", "--trials", "2"];
    let out = circlaw(&args);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["result"]["passed"], false);

    let mut with_check = args.to_vec();
    with_check.push("--check");
    let out = circlaw(&with_check);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_kind(&out), "check-failed");
    assert_eq!(json(&out)["result"]["passed"], false);

    let out = circlaw(&["montecarlo", "radius", "--n", "150", "--trials", "2", "--check"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn thread_count_does_not_change_results() {
    let args = ["montecarlo", "eigenstats", "--n", "40", "--trials", "3", "--seed", "5"];
    let one = Command::new(env!("CARGO_BIN_EXE_circlaw")).args(args).env("CIRCLAW_THREADS", "1").output().unwrap();
    let three = circlaw(&[&["--threads", "3"][..], &args[..]].concat());
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, three.stdout);
}

#[test]
fn stability_audit_and_girko_audit() {
    let out = circlaw(&["stability-audit", "--profile", "twoblock", "--n", "16", "--points", "0.1:0.3,0.01:0.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["result"]["passed"], true);

    let out = circlaw(&["montecarlo", "girko-audit", "--n", "30", "--trials", "2", "--nodes-across", "24"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["config"]["command"], "montecarlo girko-audit");
}
