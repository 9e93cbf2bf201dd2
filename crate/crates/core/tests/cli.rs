use std::fs;
use std::process::Command;

fn lmpc(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lmpc")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into(), String::from_utf8_lossy(&out.stderr).into())
}

#[test]
fn run_replay_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("pwa");
    let run_s = run.to_str().unwrap();
    let (code, stdout, stderr) = lmpc(&["run", "--example", "pwa", "--iterations", "3", "--out", run_s]);
    assert_eq!(code, 0, "{stdout}{stderr}");
    for f in ["trajectories.csv", "costs.csv", "diagnostics.jsonl", "summary.json", "safe_set.json", "config.json", "run.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let costs = fs::read_to_string(run.join("costs.csv")).unwrap();
    assert!(costs.starts_with("j,cost\n0,"));
    assert_eq!(costs.lines().count(), 4);
    for line in fs::read_to_string(run.join("diagnostics.jsonl")).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("iteration").is_some() && v.get("objective").is_some());
    }

    let (code, stdout, _) = lmpc(&["replay", "--run", run_s]);
    assert_eq!(code, 0);
    assert!(stdout.contains("reproduced exactly"));

    let (code, _, _) = lmpc(&["export-plots", "--run", run_s]);
    assert_eq!(code, 0);
    let state = fs::read_to_string(run.join("plots/pwa_state.csv")).unwrap();
    assert!(state.starts_with("j,t,final,x1,x2,u\n"));

    fs::write(run.join("costs.csv"), "j,cost\n0,1.0\n").unwrap();
    assert_eq!(lmpc(&["replay", "--run", run_s]).0, 1);
}

#[test]
fn bad_inputs_are_configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"example": "pwa", "overrides": {"N": 0}}"#).unwrap();
    let out = dir.path().join("out");
    assert_eq!(lmpc(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 2);
    fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(lmpc(&["validate", "--config", cfg.to_str().unwrap()]).0, 2);
    assert_eq!(lmpc(&["run", "--example", "rocket"]).0, 2);
    assert_eq!(lmpc(&["run"]).0, 2);
    assert_eq!(lmpc(&["export-plots", "--run", dir.path().join("missing").to_str().unwrap()]).0, 2);
    assert_eq!(lmpc(&["--help"]).0, 0);
}

#[test]
fn validate_reports_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.json");
    let (code, stdout, _) = lmpc(&["validate", "--example", "dc_motor", "--samples", "200", "--combinations", "500", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["example"], "dc_motor");
    assert_eq!(v["round_trip"]["samples"], 200);
}
