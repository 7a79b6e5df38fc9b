use std::path::Path;
use std::process::{Command, Output};

fn instloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_instloc"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_scene(dir: &Path) -> std::path::PathBuf {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/scenes/orbit10.json")).unwrap();
    let mut scene: serde_json::Value = serde_json::from_str(&text).unwrap();
    scene["trajectory"]["frames"] = 300.into();
    let path = dir.join("scene.json");
    std::fs::write(&path, scene.to_string()).unwrap();
    path
}

#[test]
fn synthetic_pipeline_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = small_scene(tmp.path());
    let data = tmp.path().join("data");
    let map = tmp.path().join("map.json");
    let pred = tmp.path().join("pred.jsonl");
    let report = tmp.path().join("report.json");

    let out = instloc(&["gen-synth", "--config", arg(&scene), "--seed", "3", "--out", arg(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["frames"], 20);

    let dets = data.join("detections.jsonl");
    let out = instloc(&[
        "build-map", "--dataset", arg(&data), "--format", "synth", "--detections", arg(&dets), "--out", arg(&map),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = instloc(&[
        "localize", "--map", arg(&map), "--dataset", arg(&data), "--detections", arg(&dets), "--stride", "60",
        "--out", arg(&pred),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&pred).unwrap().lines().count(), 5);

    let gt = data.join("groundtruth.txt");
    let out = instloc(&["evaluate", "--pred", arg(&pred), "--gt", arg(&gt), "--report", arg(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r["summary"]["success_rate"].as_f64().unwrap() >= 80.0, "{r}");
}

#[test]
fn missing_input_exits_with_input_code() {
    let tmp = tempfile::tempdir().unwrap();
    let nowhere = tmp.path().join("nope");
    let out = instloc(&[
        "evaluate", "--pred", arg(&nowhere.join("p.jsonl")), "--gt", arg(&nowhere.join("gt.txt")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = instloc(&["gen-synth", "--config", arg(&nowhere), "--out", arg(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_and_bad_eps_are_input_errors() {
    assert_eq!(instloc(&["build-map", "--bogus"]).status.code(), Some(1));
    assert_eq!(instloc(&["fusion-check", "--eps", "-1"]).status.code(), Some(1));
}

#[test]
fn malformed_predictions_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let pred = tmp.path().join("p.jsonl");
    let gt = tmp.path().join("gt.txt");
    std::fs::write(&pred, "{\"frame_id\":\"a\",\"timestamp\":1.0,\"status\":\"ok\"}\n").unwrap();
    std::fs::write(&gt, "1.0 0 0 0 0 0 0 1\n").unwrap();
    let out = instloc(&["evaluate", "--pred", arg(&pred), "--gt", arg(&gt)]);
    assert_eq!(out.status.code(), Some(1));
}
