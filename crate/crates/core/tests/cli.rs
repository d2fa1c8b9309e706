use std::path::Path;
use std::process::{Command, Output};

fn roadmtt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roadmtt")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = roadmtt(&["run", "--scenario", "/no/such/scenario.json", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no such file"));
}

#[test]
fn invalid_override_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = roadmtt(&["run", "--mc-runs", "1", "--constraint-case", "9", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_sweep_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = roadmtt(&["sweep", "--param", "delta_m", "--values", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn repeated_run_gives_identical_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let out = roadmtt(&["run", "--mc-runs", "1", "--seed", "7", "--out", path(d.path())]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&a, "results.csv"), read(&b, "results.csv"));
    assert_eq!(read(&a, "summary.json"), read(&b, "summary.json"));

    let csv = String::from_utf8(read(&a, "results.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("run,scan,ospa,loc,card,n_true,n_est"));
    assert_eq!(csv.lines().count(), 81);
    let summary: serde_json::Value = serde_json::from_slice(&read(&a, "summary.json")).unwrap();
    for key in ["OSPA distance", "Localization error", "Cardinality error"] {
        assert!(summary[key]["Mean"].is_f64() && summary[key]["Std"].is_f64(), "{key}");
    }
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = roadmtt(&["sweep", "--mc-runs", "1", "--param", "t_d", "--values", "0,20", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for v in ["t_d_0", "t_d_20"] {
        assert!(dir.path().join(v).join("results.csv").is_file());
    }
    let sweep: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn straight_road_compiles_to_one_segment() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("road.json");
    let pts: Vec<[f64; 2]> = (0..20).map(|i| [i as f64 * 10.0, 5.0 + i as f64 * 2.0]).collect();
    let road = serde_json::json!({ "roads": [{ "id": "A", "points": pts }], "birth": [{ "road": "A", "end": "start" }] });
    std::fs::write(&input, road.to_string()).unwrap();
    let output = dir.path().join("map.json");
    let out = roadmtt(&["compile-road", "--input", path(&input), "--output", path(&output)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "road A: 1 segments");
    assert!(output.is_file());
}

#[test]
fn malformed_road_file_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.json");
    std::fs::write(&input, "{\"roads\": [\n  {\"id\": 3}]}").unwrap();
    let out = roadmtt(&["compile-road", "--input", path(&input), "--output", path(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json:2:"));
}
