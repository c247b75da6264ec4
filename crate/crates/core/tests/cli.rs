use std::path::Path;
use std::process::{Command, Output};

fn ecodyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecodyn")).args(args).env_remove("ECODYN_THREADS").output().unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name).display().to_string()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn bounds_on_neutral_config_reports_bracket() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecodyn(&["--config", &config("neutral_bounds.json"), "--out", dir.path().to_str().unwrap(), "--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let b: serde_json::Value = serde_json::from_str(&read(dir.path(), "bounds.json")).unwrap();
    assert_eq!(b["n_max_bracket"], serde_json::json!([133, 134]));
    assert_eq!(b["n_star_bracket"]["provenance"], "closed-form");
    let meta: serde_json::Value = serde_json::from_str(&read(dir.path(), "run_meta.json")).unwrap();
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_reference_matches_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(ecodyn(&["--config", &config("reference.json"), "--out", d]).status.success());
    let text = std::fs::read_to_string(config("reference.json")).unwrap().replace("\"simulate\"", "\"equilibrium\"");
    assert!(ecodyn(&["--config", &text, "--out", d, "--quiet"]).status.success());
    let csv = read(dir.path(), "trajectory.csv");
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    let eq: serde_json::Value = serde_json::from_str(&read(dir.path(), "equilibrium.json")).unwrap();
    let x = eq["equilibrium"]["x_eq"][0].as_f64().unwrap();
    let v = eq["equilibrium"]["v_eq"][0].as_f64().unwrap();
    assert!((last[1] - x).abs() <= 1e-7 && (last[2] - v).abs() <= 1e-7);
    assert_eq!(read(dir.path(), "events.csv"), "species,t_star\n");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = ecodyn(&["--config", &config("reference.json"), "--out", dir.path().to_str().unwrap(), "--quiet"]);
        assert!(out.status.success());
    }
    for name in ["trajectory.csv", "events.csv", "run_meta.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn rstar_with_zero_trials_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecodyn(&["--config", &config("rstar.json"), "--trials", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=config message=/rstar/trials"), "{err}");
}

#[test]
fn small_rstar_run_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = ecodyn(&["--config", &config("rstar.json"), "--trials", "3", "--species", "80", "--out", d, "--threads", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_str(&read(dir.path(), "rstar_report.json")).unwrap();
    assert_eq!(rep["summary"]["trials"], 3);
    assert_eq!(rep["trials"].as_array().unwrap().len(), 3);
    assert_eq!(rep["trials"][0]["M"], 80);
    let first = read(dir.path(), "rstar_report.json");
    let out = Command::new(env!("CARGO_BIN_EXE_ecodyn"))
        .args(["--config", &config("rstar.json"), "--trials", "3", "--species", "80", "--out", d, "--quiet"])
        .env("ECODYN_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(first, read(dir.path(), "rstar_report.json"));
}

#[test]
fn unknown_key_exits_two_with_pointer() {
    let text = std::fs::read_to_string(config("reference.json")).unwrap().replace("\"mu\"", "\"mu_rate\": 1, \"mu\"");
    let dir = tempfile::tempdir().unwrap();
    let out = ecodyn(&["--config", &text, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("/params/mu_rate"));
    let out = ecodyn(&["--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn integration_failure_exits_three() {
    let text = std::fs::read_to_string(config("reference.json"))
        .unwrap()
        .replace("\"initial\"", "\"integrator\": { \"max_steps\": 3 }, \"initial\"");
    let dir = tempfile::tempdir().unwrap();
    let out = ecodyn(&["--config", &text, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error kind=numerical"));
}

#[test]
fn schema_is_printed() {
    let out = ecodyn(&["--print-schema"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["title"], "ecodyn run configuration");
}

#[test]
fn seed_override_changes_hash() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("neutral_bounds.json")).unwrap();
    assert!(ecodyn(&["--config", &text, "--out", a.path().to_str().unwrap(), "--quiet"]).status.success());
    assert!(ecodyn(&["--config", &text, "--out", b.path().to_str().unwrap(), "--quiet", "--seed", "5"]).status.success());
    let hash = |d: &Path| serde_json::from_str::<serde_json::Value>(&read(d, "run_meta.json")).unwrap()["config_hash"].clone();
    assert_ne!(hash(a.path()), hash(b.path()));
}
