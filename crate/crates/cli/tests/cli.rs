use std::fs;
use std::path::Path;
use std::process::Command;

use gcov_cli::run;

fn gcov(args: &[&str]) -> i32 {
    let mut argv = vec!["gcov"];
    argv.extend_from_slice(args);
    run(argv)
}

fn simulate(dir: &Path, seed: &str) -> String {
    let out = dir.join(format!("y{seed}.csv"));
    let out = out.to_str().unwrap().to_string();
    let code = gcov(&[
        "simulate", "--theta", "0.5,0,0,2", "--t", "400", "--seed", seed, "--out", &out,
    ]);
    assert_eq!(code, 0);
    out
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "7");
    assert!(Path::new(&format!("{data}.manifest.json")).exists());
    let out = dir.path().join("est.json");
    let code = gcov(&[
        "estimate", "--data", &data, "--p", "1", "--start", "ols", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let res = &v["results"][0];
    assert_eq!(res["start_used"], "ols");
    assert!(res["objective_value"].as_f64().unwrap() <= res["objective_start"].as_f64().unwrap());
    let theta: gcov_core::VarParams = serde_json::from_value(res["theta_hat"].clone()).unwrap();
    let order: gcov_core::ModelOrder = serde_json::from_value(res["order"].clone()).unwrap();
    assert_eq!(order, gcov_core::classify_estimate(&theta).unwrap());
    assert_eq!(v["start_invariant"], true);
}

#[test]
fn simulate_is_reproducible_by_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = fs::read_to_string(simulate(dir.path(), "11")).unwrap();
    let sub = dir.path().join("again");
    fs::create_dir(&sub).unwrap();
    let b = fs::read_to_string(simulate(&sub, "11")).unwrap();
    let c = fs::read_to_string(simulate(dir.path(), "12")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn annealed_estimate_writes_trace_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "3");
    let run_once = |name: &str| {
        let out = dir.path().join(format!("{name}.json"));
        let trace = dir.path().join(format!("{name}.csv"));
        let code = gcov(&[
            "estimate", "--data", &data, "--start", "annealed", "--q", "8", "--m", "40", "--seed", "5",
            "--trace", trace.to_str().unwrap(), "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        (fs::read_to_string(out).unwrap(), fs::read_to_string(trace).unwrap())
    };
    let (json_a, trace_a) = run_once("a");
    let (json_b, trace_b) = run_once("b");
    assert_eq!(json_a, json_b);
    assert_eq!(trace_a, trace_b);
    let lines: Vec<&str> = trace_a.lines().collect();
    assert_eq!(lines[0], "stage,temperature,accept_rate,f_best");
    assert_eq!(lines.len(), 1 + 8);
}

#[test]
fn slice_has_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "1");
    let out = dir.path().join("s.csv");
    let code = gcov(&[
        "slice", "--data", &data, "--entry", "1,1", "--grid", "-0.5:2.5:0.01", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "grid_value,objective");
    assert_eq!(lines.len() - 1, 301);

    let code = gcov(&[
        "slice", "--data", &data, "--entry", "1,1", "--entry", "2,2", "--grid", "0:1:0.5", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(fs::read_to_string(dir.path().join("s_22.csv")).unwrap().lines().count(), 4);
}

#[test]
fn montecarlo_exports_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mc.json");
    fs::write(
        &cfg,
        r#"{"dgp": {"params": {"n": 2, "p": 1, "coefficients": [[[0.5, 0.0], [0.0, 2.0]]]}, "t": 200},
            "start": "true_params", "replications": 3}"#,
    )
    .unwrap();
    let out = dir.path().join("report");
    let code = gcov(&[
        "montecarlo", "--config", cfg.to_str().unwrap(), "--seed", "40", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    for f in ["frequencies.csv", "histograms.csv", "records.jsonl", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([40, 41, 42]));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(gcov(&["estimate"]), 1);
    assert_eq!(gcov(&["slice", "--data", "x.csv", "--entry", "1,1"]), 1);
    assert_eq!(gcov(&["slice", "--data", "x.csv", "--entry", "0,1", "--grid", "0:1:0.1"]), 1);
    assert_eq!(gcov(&["simulate", "--t", "100"]), 1);
    assert_eq!(gcov(&["estimate", "--data", "x.csv", "--start", "sideways"]), 1);
    assert_eq!(gcov(&["montecarlo", "--config", "/definitely/missing.json"]), 1);
    assert_eq!(gcov(&["frobnicate"]), 1);
    assert_eq!(gcov(&["--help"]), 0);
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.csv");
    assert_eq!(gcov(&["estimate", "--data", missing.to_str().unwrap()]), 2);
    let short = dir.path().join("short.csv");
    fs::write(&short, "a,b\n1,2\n3,4\n").unwrap();
    assert_eq!(gcov(&["estimate", "--data", short.to_str().unwrap()]), 2);
    // explosive root on the unit circle cannot be simulated
    assert_eq!(gcov(&["simulate", "--theta", "1,0,0,0.5", "--t", "50"]), 2);
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_gcov");
    let status = Command::new(bin).arg("estimate").output().unwrap();
    assert_eq!(status.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&status.stderr).contains("--data"));
    let status = Command::new(bin).args(["estimate", "--data", "/nonexistent.csv"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
}
