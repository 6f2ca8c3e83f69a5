use std::path::Path;
use std::process::{Command, Output};

use trajkit::report::read_csv;

fn trajkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajkit"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = trajkit(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        dir.path().join("a.json"),
        dir.path().join("b.json"),
        dir.path().join("c.json"),
    );
    ok(&["gen", "--count", "100", "--seed", "7", "--out", p(&a)]);
    ok(&["gen", "--count", "100", "--seed", "7", "--out", p(&b)]);
    ok(&["gen", "--count", "100", "--seed", "8", "--out", p(&c)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn baseline_oracle_beats_constant_velocity() {
    let dir = tempfile::tempdir().unwrap();
    let (data, csv) = (dir.path().join("d.json"), dir.path().join("base.csv"));
    ok(&["gen", "--count", "100", "--seed", "7", "--out", p(&data)]);
    ok(&["baseline", "--data", p(&data), "--out", p(&csv)]);
    let rows = read_csv(&csv).unwrap();
    let names: Vec<_> = rows.iter().map(|r| r.arm.as_str()).collect();
    assert_eq!(names, ["constant_velocity", "physics_oracle"]);
    assert!(rows[1].values[0] <= rows[0].values[0]);
}

#[test]
fn unknown_flag_exits_2_with_usage() {
    let out = trajkit(&["gen", "--bogus", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_file_exits_1_with_diagnostic() {
    let out = trajkit(&[
        "baseline",
        "--data",
        "/nonexistent/d.json",
        "--out",
        "/tmp/never.csv",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn single_model_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (data, set, enc, model, report, png, svg) = (
        d.join("d.json"),
        d.join("set.json"),
        d.join("enc.ckpt"),
        d.join("m.ckpt"),
        d.join("r.json"),
        d.join("r.png"),
        d.join("o.svg"),
    );
    ok(&["gen", "--count", "60", "--seed", "3", "--out", p(&data)]);
    ok(&[
        "rasterize",
        "--data",
        p(&data),
        "--index",
        "2",
        "--out",
        p(&png),
    ]);
    assert!(std::fs::read(&png).unwrap().starts_with(b"\x89PNG"));
    ok(&[
        "trajset",
        "--data",
        p(&data),
        "--epsilon",
        "3",
        "--out",
        p(&set),
    ]);
    ok(&[
        "pretrain",
        "--data",
        p(&data),
        "--epochs",
        "1",
        "--out",
        p(&enc),
    ]);
    ok(&[
        "train",
        "--data",
        p(&data),
        "--trajset",
        p(&set),
        "--init",
        p(&enc),
        "--freeze",
        "--epochs",
        "1",
        "--out",
        p(&model),
        "--report",
        p(&report),
    ]);
    let eval = d.join("e.json");
    ok(&[
        "eval",
        "--data",
        p(&data),
        "--model",
        p(&model),
        "--trajset",
        p(&set),
        "--out",
        p(&eval),
    ]);
    assert_eq!(
        std::fs::read(&eval).unwrap(),
        std::fs::read(&report).unwrap()
    );
    let arm = format!("frozen=covernet:{}", p(&model));
    ok(&[
        "plot",
        "overlay",
        "--data",
        p(&data),
        "--index",
        "1",
        "--trajset",
        p(&set),
        "--model",
        &arm,
        "--out",
        p(&svg),
    ]);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.contains("data-arm=\"frozen\""));
}

#[test]
fn seq_head_trains_from_cli() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("seq.json");
    ok(&[
        "train",
        "--head",
        "seq",
        "--count",
        "200",
        "--epochs",
        "3",
        "--lr",
        "0.01",
        "--report",
        p(&report),
    ]);
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r["mse_speed"].as_f64().unwrap().is_finite());
}
