use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
[schema]
pre = [2]

[[models]]
name = "lo"
family = "fixed-bernoulli"
theta = 0.3

[[models]]
name = "hi"
family = "fixed-bernoulli"
theta = 0.7

[[models]]
name = "b1"
family = "cpt"
parents = [1]

[generator]
outcome = { rule = "table", parents = [1], p = [0.25, 0.75] }

[forecasters]
mixture = true
sr = {}
srf = { schedule = { schedule = "fixed", k = 2 } }

[run]
horizon = 400
replications = 2
"#;

const CHAIN: &str = r#"
[schema]

[[models]]
name = "lo"
family = "fixed-bernoulli"
theta = 0.3

[[models]]
name = "hi"
family = "fixed-bernoulli"
theta = 0.7

[generator]
outcome = { rule = "in-space", model = "hi" }

[forecasters]
srf = { schedule = { schedule = "fixed", k = 1 } }

[run]
horizon = 10
"#;

fn bbayes(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbayes")).args(args).current_dir(cwd).output().unwrap()
}

fn single_line_error(out: &Output) -> String {
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "), "{err}");
    err
}

#[test]
fn run_score_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    let out = bbayes(&["run", "--config", "c.toml", "--seed", "3", "--out", "o", "--quiet"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let steps = std::fs::read_to_string(dir.path().join("o/rep-0001/steps.csv")).unwrap();
    let mut lines = steps.lines();
    assert_eq!(lines.next().unwrap(), "t,forecaster,forecast,x,b1");
    assert!(lines.next().unwrap().starts_with("1,truth,"));
    assert_eq!(steps.lines().count(), 1 + 400 * 4);

    let out = bbayes(&["score", "--in", "o", "--out", "rescored.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rescored: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("rescored.json")).unwrap()).unwrap();
    assert_eq!(rescored["version"], 1);

    let out = bbayes(&["compare", "--in", "o", "--a", "srf", "--b", "truth"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let gap = std::fs::read_to_string(dir.path().join("o/rep-0000/srf_vs_truth_gap.csv")).unwrap();
    assert_eq!(gap.lines().count(), 401);
}

#[test]
fn tampered_row_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    assert!(bbayes(&["run", "--config", "c.toml", "--out", "o", "--quiet"], dir.path()).status.success());
    let path = dir.path().join("o/rep-0000/steps.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().take(text.lines().count() - 4).collect();
    std::fs::write(&path, kept.join("\n") + "\n").unwrap();
    let err = single_line_error(&bbayes(&["score", "--in", "o"], dir.path()));
    assert!(err.contains("rows"), "{err}");
}

#[test]
fn chain_writes_k_sweep() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CHAIN).unwrap();
    let out = bbayes(&["chain", "--config", "c.toml", "--k", "1,2,4", "--out", "d", "--quiet"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("d/chain.json")).unwrap()).unwrap();
    assert_eq!(report["version"], 1);
    let sweep = report["k_sweep"].as_array().unwrap();
    assert_eq!(sweep.iter().map(|r| r["k"].as_u64().unwrap()).collect::<Vec<_>>(), vec![1, 2, 4]);
    assert!((sweep[0]["pi_c"].as_f64().unwrap() - 0.7).abs() < 1e-10);
}

#[test]
fn invalid_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CONFIG.replace("theta = 0.3", "theta = 1.3")).unwrap();
    let err = single_line_error(&bbayes(&["run", "--config", "c.toml", "--out", "o"], dir.path()));
    assert!(err.contains("models"), "{err}");

    std::fs::write(dir.path().join("u.toml"), CONFIG.replace("horizon = 400", "horizon = 400\nspeed = 2")).unwrap();
    let err = single_line_error(&bbayes(&["run", "--config", "u.toml", "--out", "o"], dir.path()));
    assert!(err.contains("speed"), "{err}");
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    std::fs::write(dir.path().join("taken"), "").unwrap();
    single_line_error(&bbayes(&["run", "--config", "c.toml", "--out", "taken/o"], dir.path()));
}
