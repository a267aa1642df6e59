use std::path::Path;
use std::process::{Command, Output};

fn qssvm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qssvm01")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_fit_check_grid_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("circ.csv");
    let model = dir.path().join("model.json");
    let grid = dir.path().join("grid.csv");

    let out = qssvm(&["gen", "--kind", "circular", "--n-per-class", "30", "--seed", "3", "--out", s(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = std::fs::read_to_string(&data).unwrap().lines().count();
    assert_eq!(lines, 61);

    let out = qssvm(&["fit", s(&data), "--out", s(&model)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(report["status"], "converged");
    assert_eq!(report["train_accuracy"], 1.0);
    for key in ["iters", "residual_trace", "gamma_trace", "working_sizes", "certificate", "theta", "z", "wall_time_s"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }

    let out = qssvm(&["check", s(&data), "--model", s(&model), "--sweep"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cert: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cert["certificate"]["passed"], true);

    let out = qssvm(&["grid", "--model", s(&model), "--bbox", "-2,2,-2,2", "--resolution", "11", "--out", s(&grid)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&grid).unwrap();
    assert_eq!(text.lines().count(), 1 + 11 * 11);
}

#[test]
fn check_rejects_non_stationary_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("lin.csv");
    let model = dir.path().join("model.json");
    assert!(qssvm(&["gen", "--kind", "linear", "--n-per-class", "20", "--out", s(&data)]).status.success());
    let zero = serde_json::json!({ "theta": { "wtri": [0.0, 0.0, 0.0], "b": [0.0, 0.0], "c": 0.0 } });
    std::fs::write(&model, zero.to_string()).unwrap();
    let out = qssvm(&["check", s(&data), "--model", s(&model)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bench_prints_stats_table() {
    let iris = concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris.csv");
    let out = qssvm(&["bench", iris, "--class-pair", "1,2", "--trials", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("method,"));
    assert!(lines[1].starts_with("newton_l01,"));
    assert!(lines[2].starts_with("ls_qssvm,"));
}

#[test]
fn malformed_csv_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x1,x2,y\n1.0,2.0,1\n1.0,oops,-1\n").unwrap();
    let out = qssvm(&["fit", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row"));

    let out = qssvm(&["fit", s(&dir.path().join("missing.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_solver_parameter_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("lin.csv");
    assert!(qssvm(&["gen", "--kind", "linear", "--n-per-class", "10", "--out", s(&data)]).status.success());
    let out = qssvm(&["fit", s(&data), "--tau", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
}
