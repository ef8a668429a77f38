use std::path::Path;
use std::process::Command;

use serde_json::Value;
use varorder_cli::{scenarios, CliError, ScenarioConfig};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_varorder"));
    c.env_remove("VARORDER_THREADS");
    c
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, json: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path
}

#[test]
fn registry_has_every_scenario() {
    let ids: Vec<&str> = scenarios::registry().iter().map(|d| d.id).collect();
    for id in [
        "remark14",
        "flip-counterexample",
        "theorem4-random-pairs",
        "freeze-vs-refresh",
        "random-refresh",
        "gimh-exactness",
        "mcwm-bias",
        "marginal-mh-peskun",
        "gmtm-equivalence",
        "rmcmc-gaussian",
        "abc-random-refresh",
        "ergodicity-certificates",
    ] {
        assert!(ids.contains(&id), "{id} missing");
    }
}

#[test]
fn pi_then_q0_report_values() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ScenarioConfig::new("remark14");
    config.params.insert("eps".into(), 0.5.into());
    config.chain_length = Some(0);
    varorder_cli::run(&config, dir.path(), 1).unwrap();
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["passed"], true);
    let v0 = report["details"]["v_P0Q0"].as_f64().unwrap();
    let v1 = report["details"]["v_P1Q1"].as_f64().unwrap();
    assert!((v0 - 1.0 / 3.0).abs() <= 1e-12);
    assert!((v1 - 1.0).abs() <= 1e-12);
    for a in report["assertions"].as_array().unwrap() {
        assert!(a["operation"].as_str().unwrap().contains("::"));
        assert!(a["tolerance"].is_number());
    }
}

#[test]
fn equal_seeds_give_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut config = ScenarioConfig::new("freeze-vs-refresh");
    config.params.insert("toy".into(), "toy-2x2".into());
    config.params.insert("functions".into(), 3.into());
    config.chain_length = Some(20_000);
    config.replicates = 2;
    config.base_seed = 17;
    varorder_cli::run(&config, a.path(), 1).unwrap();
    varorder_cli::run(&config, b.path(), 3).unwrap();
    let csv_a = std::fs::read_to_string(a.path().join("results.csv")).unwrap();
    let csv_b = std::fs::read_to_string(b.path().join("results.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    // replicate seeds are base_seed + index
    assert!(csv_a.contains(",17,0\n") && csv_a.contains(",18,1\n"));
    let report_a = std::fs::read_to_string(a.path().join("report.json")).unwrap();
    let report_b = std::fs::read_to_string(b.path().join("report.json")).unwrap();
    assert_eq!(report_a, report_b);
}

#[test]
fn csv_header_follows_column_contract() {
    let dir = tempfile::tempdir().unwrap();
    varorder_cli::run(&ScenarioConfig::new("flip-counterexample"), dir.path(), 1).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "scenario,algorithm,metric,value,stderr,method,seed,replicate");
    let meta = read_json(&dir.path().join("metadata.json"));
    assert_eq!(meta["rng"]["algorithm"], "chacha20");
    assert!(meta["tolerances"]["entry"].as_f64().unwrap() > 0.0);
}

#[test]
fn unknown_scenario_lists_alternatives() {
    let err = ScenarioConfig::new("remark15").resolve().unwrap_err();
    assert_eq!(err.exit_code(), 1);
    let msg = err.to_string();
    assert!(msg.contains("remark15") && msg.contains("remark14") && msg.contains("mcwm-bias"), "{msg}");

    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), r#"{"scenario": "nope"}"#);
    let out = bin().arg("run").arg(&path).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("available: remark14"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [
        r#"{"scenario": "remark14", "params": {"epsilon": 0.5}}"#,
        r#"{"scenario": "remark14", "params": {"eps": 1.5}}"#,
        r#"{"scenario": "remark14", "params": {"eps": "half"}}"#,
        r#"{"scenario": "remark14", "replicates": 0}"#,
        r#"{"scenario": "remark14", "algorithms": ["P2Q2"]}"#,
        r#"{"scenario": "remark14", "chain_length": -1}"#,
        r#"{"scenario": "marginal-mh-peskun", "params": {"toy": "toy-9x9"}}"#,
        r#"{"scenario": "remark14", "seed": 3}"#,
        "not json",
    ] {
        let path = write_config(dir.path(), bad);
        let out = bin().arg("run").arg(&path).arg("--out-dir").arg(dir.path().join("out")).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "{bad}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = bin().args(["run", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_assertions_exit_with_three_and_still_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ScenarioConfig::new("random-refresh");
    config.params.insert("toy".into(), "toy-2x2".into());
    config.chain_length = Some(0);
    match varorder_cli::run(&config, dir.path(), 1) {
        Err(e @ CliError::Assertion { .. }) => assert_eq!(e.exit_code(), 3),
        other => panic!("expected an assertion failure, got {:?}", other.map(|o| o.files)),
    }
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["passed"], false);
    let failing: Vec<&str> = report["assertions"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|a| a["holds"] == false)
        .map(|a| a["name"].as_str().unwrap())
        .collect();
    assert_eq!(failing, ["toy-2x2: random-refresh kernel P3Q is pi-reversible"]);
}

#[test]
fn ordering_scenarios_pass() {
    for id in ["freeze-vs-refresh", "marginal-mh-peskun", "theorem4-random-pairs", "ergodicity-certificates"]
    {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ScenarioConfig::new(id);
        config.chain_length = Some(0);
        let out = varorder_cli::run(&config, dir.path(), 1).unwrap();
        assert!(out.outcome.assertions.iter().all(|a| a.holds), "{id}");
        assert_eq!(out.files.len(), 3);
    }
}

#[test]
fn every_scenario_runs_at_small_sizes() {
    for d in scenarios::registry() {
        let mut config = ScenarioConfig::new(d.id);
        if d.default_chain_length > 0 {
            config.chain_length = Some(5_000);
        }
        let resolved = config.resolve().unwrap();
        let outcome = varorder_cli::execute(&resolved, 1).unwrap();
        assert!(!outcome.rows.is_empty(), "{}", d.id);
        assert!(!outcome.assertions.is_empty(), "{}", d.id);
    }
}

#[test]
fn seed_flag_and_thread_env_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let path =
        write_config(dir.path(), r#"{"scenario": "rmcmc-gaussian", "chain_length": 1000, "base_seed": 1}"#);
    let out_dir = dir.path().join("out");
    let out = bin()
        .arg("run")
        .arg(&path)
        .args(["--seed", "99", "--threads", "2"])
        .arg("--out-dir")
        .arg(&out_dir)
        .env("VARORDER_THREADS", "1")
        .output()
        .unwrap();
    let code = out.status.code();
    assert!(code == Some(0) || code == Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let meta = read_json(&out_dir.join("metadata.json"));
    assert_eq!(meta["threads"], 1);
    assert_eq!(meta["resolved"]["base_seed"], 99);
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(csv.contains(",99,0\n"));
}

#[test]
fn describe_prints_a_runnable_config() {
    let out = bin().args(["describe", "abc-random-refresh"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let json = &text[text.find('{').unwrap()..];
    let config = ScenarioConfig::from_json(json).unwrap();
    assert_eq!(config.scenario, "abc-random-refresh");
    config.resolve().unwrap();
    let out = bin().args(["describe", "abc"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().arg("list").output().unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 12);
}
