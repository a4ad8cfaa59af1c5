//! End-to-end tests of the command-line front end: spawn the binary,
//! feed it fixture files, and check outputs and exit codes.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_opuc");

fn fixture(name: &str, content: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("opuc-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).expect("fixture dir");
    let path = dir.join(name);
    fs::write(&path, content).expect("fixture write");
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

/// Run expecting success; parse the JSON envelope and return its result.
fn run_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).expect("valid JSON output");
    assert!(v.get("version").is_some(), "envelope has a version field");
    assert!(v.get("timestamp").is_some(), "envelope has a timestamp field");
    v["result"].clone()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn one_point_spec_yields_the_harmonic_coefficients() {
    let eta = fixture("eta_one.json", r#"{"singular_points": [{"theta": 0.0, "m": 1}]}"#);
    let result = run_json(&["coeffs", eta.to_str().unwrap(), "--count", "5"]);
    let prefix = result["coefficients"]["prefix"].as_array().unwrap();
    let expected = [-0.5, -1.0 / 3.0, -0.25, -0.2, -1.0 / 6.0];
    assert_eq!(prefix.len(), 5);
    for (got, want) in prefix.iter().zip(expected) {
        assert!((got.as_f64().unwrap() - want).abs() <= 1e-10);
    }
}

#[test]
fn uniform_measure_yields_zero_coefficients() {
    let mu = fixture(
        "uniform.json",
        r#"{"density": {"type": "trigpoly", "coeffs": [1.0]}, "point_masses": []}"#,
    );
    let result = run_json(&["coeffs", mu.to_str().unwrap(), "--count", "8"]);
    for entry in result["coefficients"]["prefix"].as_array().unwrap() {
        assert!(entry.as_f64().unwrap().abs() <= 1e-12);
    }
}

#[test]
fn malformed_input_exits_with_usage_code() {
    let bad = fixture("bad.json", "not json {");
    let out = run(&["coeffs", bad.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn missing_input_file_exits_with_usage_code() {
    let out = run(&["gn-check", "/nonexistent/sequence.json"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn szego_on_the_zero_sequence_vanishes_on_both_sides() {
    let seq = fixture("zero.json", r#"{"closed_form": "zero"}"#);
    let result = run_json(&[
        "sumrule", "--case", "szego", seq.to_str().unwrap(), "--base", "64", "--grid", "8",
    ]);
    assert!(result["measure_side"].as_f64().unwrap().abs() <= 1e-12);
    assert!(result["coeff_side"]["total"].as_f64().unwrap().abs() <= 1e-12);
    assert_eq!(result["verdict"], "finite");
}

#[test]
fn complex_entries_are_rejected_for_real_cases() {
    let seq = fixture(
        "complex.json",
        r#"{"prefix": [{"re": 0.1, "im": 0.2}], "real": false}"#,
    );
    let out = run(&[
        "sumrule", "--case", "mixed_21", seq.to_str().unwrap(), "--base", "64", "--grid", "8",
    ]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("real coefficients"));
}

#[test]
fn ladder_csv_has_one_row_per_rung() {
    let seq = fixture("finite.json", r#"{"prefix": [0.0, 0.3, -0.2, 0.1], "real": true}"#);
    let out = run(&[
        "sumrule", "--case", "szego", seq.to_str().unwrap(), "--base", "64", "--grid", "8",
        "--csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,measure_side,coeff_total");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("64,"));
    assert!(lines[3].starts_with("256,"));
}

#[test]
fn gem_reports_term_verdicts() {
    let seq = fixture("finite_gem.json", r#"{"prefix": [0.0, 0.3, -0.2, 0.1], "real": true}"#);
    let result = run_json(&[
        "gem", "--case", "mixed_21", seq.to_str().unwrap(), "--base", "32", "--grid", "6",
    ]);
    assert_eq!(result["outcome"], "finite");
    let names: Vec<&str> = result["terms"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"I2"));
}

#[test]
fn classify_reports_hold_for_the_zero_sequence() {
    let seq = fixture("zero_cls.json", r#"{"closed_form": "zero"}"#);
    let pts = fixture("one_pt.json", r#"[{"theta": 0.0, "m": 1}]"#);
    let result = run_json(&[
        "classify", seq.to_str().unwrap(), pts.to_str().unwrap(), "--scheme", "uniform",
    ]);
    assert_eq!(result["verdict"], "holds");
}

#[test]
fn scheme_names_use_their_cli_spellings() {
    let seq = fixture("zero_cls2.json", r#"{"closed_form": "zero"}"#);
    let pts = fixture("one_pt2.json", r#"[{"theta": 0.0, "m": 1}]"#);
    for scheme in ["uniform", "decomposed", "leave-one-out", "reduced"] {
        let result = run_json(&[
            "classify", seq.to_str().unwrap(), pts.to_str().unwrap(), "--scheme", scheme,
        ]);
        assert_eq!(result["verdict"], "holds", "scheme {scheme}");
    }
}

#[test]
fn relaxed_scheme_demands_its_two_point_configuration() {
    let seq = fixture("zero_rel.json", r#"{"closed_form": "zero"}"#);
    let pts = fixture(
        "three_pts.json",
        r#"[{"theta": 0.0, "m": 2}, {"theta": 3.141592653589793, "m": 1}, {"theta": 1.5, "m": 1}]"#,
    );
    let out = run(&[
        "classify", seq.to_str().unwrap(), pts.to_str().unwrap(), "--scheme", "relaxed",
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn slow_decay_witness_splits_the_membership_checks() {
    let seq = fixture("witness.json", r#"{"closed_form": "fifth_root_decay"}"#);
    let pts = fixture(
        "two_pts.json",
        r#"[{"theta": 0.0, "m": 2}, {"theta": 3.141592653589793, "m": 1}]"#,
    );
    let result = run_json(&[
        "classify", seq.to_str().unwrap(), pts.to_str().unwrap(), "--scheme", "relaxed",
    ]);
    assert_eq!(result["verdict"], "holds");
}

#[test]
fn trace_expansion_reports_its_degree() {
    let result = run_json(&["trace-expand", "-q", "3"]);
    assert_eq!(result["degree"], 3);
}

#[test]
fn interpolation_check_reports_both_sides() {
    let seq = fixture("gn.json", r#"{"prefix": [0.0, 0.5, 0.1], "real": true}"#);
    let result = run_json(&["gn-check", seq.to_str().unwrap()]);
    assert_eq!(result["holds"], true);
    assert!(result["lhs"].as_f64().unwrap() <= result["rhs"].as_f64().unwrap());
}

#[test]
fn measure_roundtrip_recovers_the_coefficients() {
    let seq = fixture("round.json", r#"{"prefix": [0.2, -0.3, 0.1], "real": true}"#);
    let dir = seq.parent().unwrap().to_path_buf();
    let out = run(&["measure", seq.to_str().unwrap(), "-n", "12", "--grid", "10"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let mu_path = dir.join("round_measure.json");
    fs::write(&mu_path, serde_json::to_string(&v["result"]["measure"]).unwrap()).unwrap();
    let back = run_json(&["coeffs", mu_path.to_str().unwrap(), "--count", "3"]);
    let prefix = back["coefficients"]["prefix"].as_array().unwrap();
    // Grid extraction leaves rounding-level imaginary parts, so entries may
    // come back as {re, im} pairs.
    for (got, want) in prefix.iter().zip([0.2, -0.3, 0.1]) {
        let re = got.as_f64().unwrap_or_else(|| got["re"].as_f64().unwrap());
        let im = got.get("im").and_then(Value::as_f64).unwrap_or(0.0);
        assert!((re - want).abs() <= 1e-6);
        assert!(im.abs() <= 1e-9);
    }
}

#[test]
fn ensemble_smoke_runs_with_unit_weights() {
    let result = run_json(&["ensemble", "--N", "4", "--draws", "10", "--seed", "7"]);
    let summary = &result["summary"];
    assert_eq!(summary["ess"], 10.0);
    assert_eq!(summary["degenerate"], false);
    let mean_abs = summary["mean_abs_sq"].as_array().unwrap();
    assert_eq!(mean_abs.len(), 4);
    assert!((mean_abs[3].as_f64().unwrap() - 1.0).abs() <= 1e-12);
    // KS summary fields are always present.
    assert!(result["ks"]["max_statistic"].is_f64());
    assert!(result["ks"]["critical_1pct"].is_f64());
    assert!(result["ks"]["within"].is_boolean());
}

#[test]
fn ensemble_output_is_reproducible_apart_from_the_timestamp() {
    let strip = |out: Output| -> String {
        String::from_utf8(out.stdout)
            .unwrap()
            .lines()
            .filter(|l| !l.contains("\"timestamp\""))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let args = ["ensemble", "--N", "4", "--draws", "10", "--seed", "42"];
    let first = strip(run(&args));
    let second = strip(run(&args));
    assert!(!first.is_empty());
    assert_eq!(first, second);

    // A spec file with the same fields produces the same batch.
    let spec = fixture("espec.json", r#"{"n": 4, "draws": 10, "seed": 42}"#);
    let from_file = strip(run(&["ensemble", spec.to_str().unwrap()]));
    assert_eq!(first, from_file);
}

#[test]
fn tilted_ensemble_reports_degeneracy_honestly() {
    let result = run_json(&[
        "ensemble", "--N", "4", "--draws", "40", "--seed", "11", "--potential",
        r#"{"cosine": [1.0]}"#,
    ]);
    let summary = &result["summary"];
    assert!(summary["ess"].as_f64().unwrap() < 40.0);
    // Tilting lowers the tilted statistic's weighted mean.
    let weighted = summary["tilt_mean_weighted"].as_f64().unwrap();
    let unweighted = summary["tilt_mean_unweighted"].as_f64().unwrap();
    assert!(weighted <= unweighted);
}

#[test]
fn unknown_case_id_exits_with_usage_code() {
    let seq = fixture("zero_case.json", r#"{"closed_form": "zero"}"#);
    let out = run(&["sumrule", "--case", "nonsense", seq.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
}
