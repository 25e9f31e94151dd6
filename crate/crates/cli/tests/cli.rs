use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn robout(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robout"))
        .args(args)
        .env_remove("ROBOUT_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_then_detect() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let o = robout(&["simulate", "--scenario", "1a", "--m", "19", "--seed", "4", "--out", p(&sim)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let truth = read_json(&sim.join("truth.json"));
    let rpt = dir.path().join("rpt");
    let o = robout(&[
        "detect", "--input", p(&sim.join("data.csv")), "--response", "y", "--variant", "sncd-h+mm",
        "--k", "3", "--alpha", "0.1", "--seed", "7", "--out", p(&rpt),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = read_json(&rpt.join("outcomes.json"));
    let cells = out.as_array().unwrap();
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0]["status"], "ok");
    assert_eq!(cells[0]["outcome"]["selection"]["support"], truth["support"]);
    assert!(cells[0]["outcome"]["diagnostics"].get("timings").is_none());
    let obs = fs::read_to_string(rpt.join("observations_sncd-h+mm_k3.csv")).unwrap();
    assert_eq!(obs.lines().count(), 201);
    assert!(obs.starts_with("index,residual,scaled_residual,flag,weight"));
    let cfg = read_json(&rpt.join("config.json"));
    assert_eq!(cfg["seed"], 7);
    assert_eq!(cfg["k"], serde_json::json!([3]));
}

#[test]
fn csv_summary_format() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert_eq!(code(&robout(&["simulate", "--scenario", "3a", "--out", p(&sim)])), 0);
    let rpt = dir.path().join("rpt");
    let o = robout(&[
        "detect", "--input", p(&sim.join("data.csv")), "--response", "0", "--variants", "all",
        "--k-grid", "2,3", "--format", "csv", "--out", p(&rpt),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(rpt.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 13);
    assert!(!rpt.join("outcomes.json").exists());
}

#[test]
fn missing_response_column() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert_eq!(code(&robout(&["simulate", "--scenario", "1a", "--out", p(&sim)])), 0);
    let o = robout(&[
        "detect", "--input", p(&sim.join("data.csv")), "--response", "revenue", "--out",
        p(&dir.path().join("r")),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("revenue"));
}

fn tiny_file(dir: &Path) -> std::path::PathBuf {
    // four rows: one more than K = 3, which leaves no room for differencing
    let path = dir.join("tiny.csv");
    fs::write(
        &path,
        "y,a,b,c,d,e\n1.5,0.3,1.2,-0.7,2.0,0.1\n-0.4,1.1,-0.2,0.5,-1.3,0.8\n2.2,-0.9,0.4,1.6,0.2,-1.1\n0.7,0.2,-1.5,-0.3,0.9,1.4\n",
    )
    .unwrap();
    path
}

#[test]
fn partial_infeasibility_still_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let input = tiny_file(dir.path());
    let rpt = dir.path().join("rpt");
    let o = robout(&["detect", "--input", p(&input), "--response", "y", "--k", "3", "--out", p(&rpt)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = read_json(&rpt.join("outcomes.json"));
    for cell in out.as_array().unwrap() {
        let gs = cell["variant"].as_str().unwrap().ends_with("+gs");
        assert_eq!(cell["status"], if gs { "infeasible" } else { "ok" }, "{cell}");
        if gs {
            assert_eq!(cell["stage"], "regression");
        }
    }
}

#[test]
fn total_infeasibility_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = tiny_file(dir.path());
    let o = robout(&[
        "detect", "--input", p(&input), "--response", "y", "--variant", "sncd-h+gs,sncd-q+gs", "--k", "3",
        "--out", p(&dir.path().join("rpt")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_presets() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("2c");
    let o = robout(&["simulate", "--scenario", "2c", "--m", "7", "--seed", "11", "--out", p(&sim)]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(sim.join("data.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 50);
    assert_eq!(rows[0].len(), 501);
    let zeros = rows.iter().flat_map(|r| r[1..].iter()).filter(|v| **v == 0.0).count();
    assert_eq!(zeros, (0.3_f64 * 50.0 * 497.0).round() as usize);

    let sim = dir.path().join("6b");
    assert_eq!(code(&robout(&["simulate", "--scenario", "6b", "--m", "3", "--out", p(&sim)])), 0);
    let cfg = read_json(&sim.join("config.json"));
    assert_eq!(cfg["outlier_mode"], "mean");
    assert_eq!(cfg["leverage"], false);
    assert_eq!((cfg["n"].as_u64(), cfg["p"].as_u64()), (Some(200), Some(100)));
}

#[test]
fn custom_scenario_fields_override_preset() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("s");
    let o = robout(&[
        "simulate", "--scenario", "1a", "--n", "40", "--p", "12", "--k", "2", "--rho", "0.5", "--beta-sign",
        "negative", "--out", p(&sim),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let truth = read_json(&sim.join("truth.json"));
    assert_eq!(truth["config"]["n"], 40);
    assert!(truth["coefficients"].as_array().unwrap().iter().all(|b| b.as_f64().unwrap() < 0.0));
}

#[test]
fn unknown_preset_and_bad_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = robout(&["simulate", "--scenario", "9z", "--out", p(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("9z"));
    assert_eq!(code(&robout(&["detect", "--nonsense"])), 1);
    assert_eq!(code(&robout(&[])), 1);
    assert_eq!(code(&robout(&["benchmark", "--m-grid", "5:0:1", "--out", p(dir.path())])), 1);
    assert_eq!(code(&robout(&["--help"])), 0);
}

#[test]
fn benchmark_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let o = robout(&[
        "benchmark", "--scenario", "1a", "--variants", "all", "--m-grid", "3:2:19", "--replicates", "2",
        "--seed", "1", "--out", p(&out), "--threads", "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let long = fs::read_to_string(out.join("long.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 9 * 6 * 6);
    let wide = fs::read_to_string(out.join("wide_mr.csv")).unwrap();
    assert_eq!(wide.lines().count(), 7);
    assert!(!out.join("timings.csv").exists());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("sncd-q+gs"));
}
