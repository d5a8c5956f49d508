use std::path::PathBuf;
use std::process::{Command, Output};

fn kcone(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kcone")).args(args).env("KCONE_THREADS", "1").output().expect("binary runs")
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("kcone-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn bundled_path(name: &str) -> String {
    format!("{}/problems/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn example_writes_report_to_stdout() {
    let out = kcone(&["example", "sextic-secondary"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["k"], 3);
    assert_eq!(report["chi"], 3);
    assert_eq!(report["l"], 1);
    assert_eq!(report["verdict"], "bifurcation");
    assert_eq!(report["schema"], "kcone-report");
}

#[test]
fn analyze_writes_output_file_with_digest() {
    let dir = std::env::temp_dir().join(format!("kcone-cli-out-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out_path = dir.join("pitchfork.json");
    let out = kcone(&["analyze", &bundled_path("pitchfork"), "-o", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!(report["input_digest"].as_str().unwrap().starts_with("sha256:"));
    assert_eq!(report["approximation"]["order"]["kind"], "exact-zero");
}

#[test]
fn not_transversal_exits_with_one() {
    let p = scratch("flat.json", r#"{"n":2,"m":1,"map":[[{"coef":"1","exp":[0,2]}]],"curve":[["1","0"]],"k_max":3}"#);
    let out = kcone(&["analyze", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn parse_errors_exit_with_two_and_a_line_number() {
    let p = scratch("broken.json", "{\n  \"n\": 2,\n  \"m\": 1,\n  \"map\": [[{\"coef\": \"1\" \"exp\": [1, 1]}]]\n}");
    let out = kcone(&["analyze", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
    let missing = kcone(&["analyze", "/nonexistent/problem.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn exhausted_curve_direction_exits_with_four() {
    let p = scratch(
        "exhausted.json",
        r#"{"n":2,"m":3,"map":[[{"coef":"1","exp":[1,0]}],[{"coef":"1","exp":[0,2]}],[]],"curve":[["0","1"]],"k_max":3}"#,
    );
    let out = kcone(&["analyze", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn trace_with_empty_grid_echoes_default() {
    let out = kcone(&["trace", &bundled_path("pitchfork"), "--grid", ""]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().contains("grid 0.1:0.0001:25 (default)"));
    assert_eq!(lines.next().unwrap(), "eps,residual,abs_det,inv_norm,dnorm_1,dnorm_2,lin_residual");
    assert_eq!(lines.count(), 50);
}

#[test]
fn trace_is_bitwise_deterministic() {
    let a = kcone(&["trace", &bundled_path("sextic-secondary"), "--grid", "0.1:0.001:9"]);
    let b = kcone(&["trace", &bundled_path("sextic-secondary"), "--grid", "0.1:0.001:9"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn verify_small_budget_passes() {
    let out = kcone(&["verify", "--k", "2", "--count", "8", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["all_hold"], true);
}

#[test]
fn verify_reports_corrupted_scheme() {
    let out = kcone(&["verify", "--k", "2", "--count", "4", "--corrupt-d", "5,2,2"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("FAIL d-intertwining"));
    assert!(stderr.contains("first differing block"));
}

#[test]
fn unknown_example_is_rejected() {
    let out = kcone(&["example", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}
