use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ecfam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecfam"))
        .args(args)
        .env_remove("ECFAM_THREADS")
        .output()
        .expect("binary runs")
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn run_with_report(args: &[&str]) -> (i32, Value) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["--out", out.to_str().unwrap()]);
    let o = ecfam(&all);
    (o.status.code().unwrap(), report(&out))
}

#[test]
fn verify_lemmas_passes_and_reports_matrix() {
    let (code, r) = run_with_report(&["verify-lemmas", "--rmax", "35"]);
    assert_eq!(code, 0);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["pass"], true);
    assert_eq!(r["checks"]["parameterization"], true);
    assert_eq!(r["config"]["command"]["verify-lemmas"]["rmax"], 35);
}

#[test]
fn first_moment_has_ratio() {
    let (code, r) = run_with_report(&["first-moment", "--X", "1e4", "--nu", "0.5"]);
    assert_eq!(code, 0);
    let ratio = r["results"]["ratio"].as_f64().unwrap();
    assert!(ratio > 0.5 && ratio < 1.5, "{ratio}");
}

#[test]
fn first_integral_oracle_value() {
    let (code, r) = run_with_report(&["asymptotics", "--prop", "1", "--V", "1000"]);
    assert_eq!(code, 0);
    assert!((r["results"]["value"].as_f64().unwrap() - 4.383).abs() < 1e-3);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(ecfam(&["first-moment"]).status.code(), Some(2));
    assert_eq!(ecfam(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(ecfam(&["asymptotics", "--prop", "4"]).status.code(), Some(2));
    assert_eq!(ecfam(&["asymptotics", "--prop", "2"]).status.code(), Some(2));
    assert_eq!(ecfam(&["family-count", "--X", "1e4", "--threads", "0"]).status.code(), Some(2));
    assert_eq!(ecfam(&["second-moment", "--X", "1e4"]).status.code(), Some(2));
}

#[test]
fn out_of_range_exponent_needs_force() {
    let args = ["second-moment", "--X", "1e4", "--alpha", "0.2,0.3"];
    assert_eq!(ecfam(&args).status.code(), Some(2));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(ecfam(&forced).status.code(), Some(0));
}

#[test]
fn cost_guard_exits_three_with_partial_report() {
    let (code, r) = run_with_report(&["complete-sums", "--r", "169", "--max-pairs-per-prime", "100"]);
    assert_eq!(code, 3);
    assert_eq!(r["pass"], false);
    assert!(r["error"].as_str().unwrap().contains("cost guard"));
    assert_eq!(r["config"]["common"]["max_pairs_per_prime"], 100);
    assert!(r.get("results").is_none());
}

#[test]
fn failed_check_exits_one() {
    let o = ecfam(&["afe-check", "--a", "1", "--b", "1", "--threshold", "1e-300"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reports_are_reproducible_up_to_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("r{i}.json"));
        let o = ecfam(&[
            "cross-moment", "--X", "1e4", "--alpha1", "0.1", "--alpha2", "0.2", "--beta1", "0.1",
            "--beta2", "0.1", "--scales", "0.5,1", "--threads", "2", "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        let mut r = report(&out);
        assert_eq!(r["config"]["resolved_threads"], 2);
        r.as_object_mut().unwrap().remove("wall_time_s");
        texts.push(serde_json::to_string(&r).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn coefficient_table_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let o = ecfam(&["coeffs", "--a", "1", "--b", "1", "--nmax", "30", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,a_n,lambda,rho");
    assert_eq!(lines.len(), 31);
    assert!(lines[5].starts_with("5,-3,"));
}

#[test]
fn coefficient_table_as_json() {
    let o = ecfam(&["coeffs", "--a", "2", "--b", "3", "--nmax", "10", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let end = text.rfind('}').unwrap();
    let v: Value = serde_json::from_str(&text[..=end]).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 10);
}
