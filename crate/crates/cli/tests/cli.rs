use std::fs;
use std::path::Path;

use assert_cmd::Command;

fn sptoken() -> Command {
    Command::cargo_bin("sptoken").unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.json");
    fs::write(
        &path,
        r#"{"network": {"grid": {"rows": 6, "cols": 6}}, "horizon": 36,
            "jams": [{"state": {"link": [14, 15]}, "start": 5, "end": 14}],
            "episodes": 20, "realizations": 3}"#,
    )
    .unwrap();
    path
}

#[test]
fn experiment_writes_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = sptoken()
        .args(["exp1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path())
        .args(["--stamp", "run"])
        .assert()
        .success();
    let stdout = String::from_utf8(out.get_output().stdout.clone()).unwrap();
    assert!(stdout.contains("6a_avoid: "));
    let dir = tmp.path().join("exp1").join("run");
    let csv = fs::read_to_string(dir.join("records.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "realization,episode,token_id,travel_time_s,travel_distance_m,completed,route");
    assert_eq!(lines.count(), 3 * 20);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["experiment"], "exp1");
    let echo: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("config.echo.json")).unwrap()).unwrap();
    assert_eq!(echo["episodes"], 20);
    assert!(dir.join("ledger.log").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    for stamp in ["a", "b"] {
        sptoken()
            .args(["exp1", "--seed", "11", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(tmp.path())
            .args(["--stamp", stamp])
            .assert()
            .success();
    }
    let base = tmp.path().join("exp1");
    for file in ["records.csv", "summary.json", "ledger.log"] {
        assert_eq!(fs::read(base.join("a").join(file)).unwrap(), fs::read(base.join("b").join(file)).unwrap(), "{file}");
    }
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    sptoken()
        .args(["exp1", "--episodes", "8", "--realizations", "2", "--no-ledger", "--algorithm", "ucbq", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path())
        .args(["--stamp", "x"])
        .assert()
        .success();
    let dir = tmp.path().join("exp1").join("x");
    let echo: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("config.echo.json")).unwrap()).unwrap();
    assert_eq!(echo["episodes"], 8);
    assert_eq!(echo["algorithm"], "ucbq");
    assert_eq!(echo["ledger"]["enabled"], false);
    assert_eq!(fs::read_to_string(dir.join("records.csv")).unwrap().lines().count(), 1 + 2 * 8);
    assert!(!dir.join("ledger.log").exists());
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    sptoken().args(["exp1", "--episodes", "0"]).arg("--out").arg(tmp.path()).assert().code(2);
    sptoken().args(["exp3", "--realizations", "0"]).arg("--out").arg(tmp.path()).assert().code(2);
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"origin": {"state": 999999}}"#).unwrap();
    let out = sptoken().args(["exp1", "--config"]).arg(&bad).arg("--out").arg(tmp.path()).assert().code(2);
    assert!(String::from_utf8_lossy(&out.get_output().stderr).contains("origin"));
    sptoken().args(["exp1", "--config", "/nonexistent/cfg.json"]).assert().code(2);
    sptoken().args(["exp1", "--algorithm", "sarsa"]).assert().code(2);
}

#[test]
fn runtime_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("broken.log");
    fs::write(&log, [9u8, 0, 0, 0, 1, 2]).unwrap();
    sptoken().args(["ledger", "dump", "--log"]).arg(&log).assert().code(3);
    let cfg = small_config(tmp.path());
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    sptoken().args(["exp1", "--config"]).arg(&cfg).arg("--out").arg(&blocker).assert().code(3);
}

#[test]
fn network_tools() {
    let tmp = tempfile::tempdir().unwrap();
    let net = tmp.path().join("net.json");
    let merged = tmp.path().join("merged.json");
    sptoken().args(["net", "gen", "--rows", "4", "--cols", "5", "--out"]).arg(&net).assert().success();
    let out = sptoken().args(["net", "merge", "--network"]).arg(&net).arg("--out").arg(&merged).assert().success();
    let report: serde_json::Value = serde_json::from_slice(&out.get_output().stdout).unwrap();
    assert_eq!(report["components"], 1);
    let graph: serde_json::Value = serde_json::from_str(&fs::read_to_string(&merged).unwrap()).unwrap();
    assert_eq!(graph["states"].as_array().unwrap().len() as u64, report["states"].as_u64().unwrap());
    sptoken().args(["net", "gen", "--rows", "1"]).assert().code(2);
    sptoken().args(["net", "merge", "--network", "/nonexistent.json"]).assert().code(2);
}

#[test]
fn apow_round_reports_sub_difficulties() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("round.json");
    fs::write(&input, r#"{"participants": ["a", "b", "c"], "data": {"a": [1.0, 0.0], "b": [0.0, 1.0], "c": [2.0, 2.0]}, "d0": 3.0, "alpha": 0.5, "norm": "l1"}"#)
        .unwrap();
    let out = sptoken().args(["apow", "round", "--seed", "4", "--input"]).arg(&input).assert().success();
    let v: serde_json::Value = serde_json::from_slice(&out.get_output().stdout).unwrap();
    for p in ["a", "b", "c"] {
        let party = &v["parties"][p];
        assert_eq!(party["sub_difficulties"].as_array().unwrap().len(), 3);
        let total: f64 = party["sub_difficulties"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!(total >= party["single_step"].as_f64().unwrap());
    }
    assert!(!v["transcript"].as_array().unwrap().is_empty());
    fs::write(&input, r#"{"participants": [], "data": {}, "d0": 3.0, "alpha": 0.5}"#).unwrap();
    sptoken().args(["apow", "round", "--input"]).arg(&input).assert().code(2);
}

#[test]
fn ledger_dump_replays_experiment_log() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    sptoken()
        .args(["exp1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path())
        .args(["--stamp", "l"])
        .assert()
        .success();
    let log = tmp.path().join("exp1").join("l").join("ledger.log");
    let out = sptoken().args(["ledger", "dump", "--log"]).arg(&log).assert().success();
    let text = String::from_utf8(out.get_output().stdout.clone()).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(rows.len() > 20);
    assert!(rows[0]["parents"].as_array().unwrap().is_empty());
    for row in &rows[1..] {
        let parents = row["parents"].as_array().unwrap();
        assert!(!parents.is_empty() && parents.len() <= 2);
        for key in ["id", "issuer", "token", "timestamp", "difficulty_bits"] {
            assert!(row.get(key).is_some(), "{key}");
        }
    }
}
