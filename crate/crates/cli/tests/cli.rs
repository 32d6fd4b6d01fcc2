use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn regsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regsel")).args(args).output().expect("binary runs")
}

/// Runs with whitespace-separated arguments followed by `tail`.
fn regsel_line(line: &str, tail: &[&str]) -> Output {
    let mut args: Vec<&str> = line.split_whitespace().collect();
    args.extend_from_slice(tail);
    regsel(&args)
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Object keys in the order they are printed.
fn printed_keys(text: &str) -> Vec<String> {
    text.lines()
        .filter(|l| l.starts_with("  \"") && !l.starts_with("   "))
        .map(|l| l.trim().split('"').nth(1).unwrap().to_string())
        .collect()
}

#[test]
fn decompose_l1_sign_vector() {
    let out = regsel(&["decompose", "--reg", "l1", "--x", "[3,0,-2]"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["e"], serde_json::json!([1.0, 0.0, -1.0]));
    assert_eq!(v["t"]["dim"], 2);
}

#[test]
fn decompose_rejects_zero_linf() {
    let out = regsel(&["decompose", "--reg", "linf", "--x", "[0,0]"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));
}

#[test]
fn decompose_tv_piecewise_constant() {
    let out = regsel(&["decompose", "--reg", "tv1d", "--x", "[1,1,2,2]"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["t"]["dim"], 2);
}

#[test]
fn decompose_reads_vector_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.json");
    fs::write(&path, "[0.5, -1, 0, 0]").unwrap();
    let out = regsel(&["decompose", "--reg", "group", "--block-size", "2", "--x", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["t"]["dim"], 2);
}

#[test]
fn output_keys_are_sorted() {
    let out = regsel(&["decompose", "--reg", "l1", "--x", "[3,0,-2]"]);
    let keys = printed_keys(&String::from_utf8_lossy(&out.stdout));
    let mut sorted = keys.clone();
    sorted.sort();
    assert!(keys.len() > 3);
    assert_eq!(keys, sorted);
}

#[test]
fn certify_orthogonal_off_support_columns() {
    let out = regsel(&["certify", "--reg", "l1", "--phi", "[[1,0,0],[0,1,1]]", "--x", "[5,0,0]"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["verdict"], "identifiable");
    assert!(v["ic"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(v["alpha_f"], serde_json::json!([1.0, 0.0]));
}

#[test]
fn certify_correlated_column_not_identifiable() {
    // After normalization the third column is (1,1)/√2, so IC = √2.
    let out = regsel(&["certify", "--reg", "l1", "--normalize", "--phi", "[[1,0,3],[0,1,3]]", "--x", "[5,5,0]"]);
    assert_eq!(code(&out), 3);
    let ic = json(&out)["ic"].as_f64().unwrap();
    assert!((ic - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn certify_without_restricted_injectivity_is_inconclusive() {
    let out = regsel(&["certify", "--reg", "l1", "--phi", "[[1,1]]", "--x", "[5,5]"]);
    assert_eq!(code(&out), 4);
    let v = json(&out);
    assert_eq!(v["verdict"], "inconclusive");
    assert!(v["reason"].as_str().unwrap().contains("injective"));
}

#[test]
fn certify_rejects_shape_mismatch() {
    let out = regsel(&["certify", "--reg", "l1", "--phi", "[[1,0],[0,1]]", "--x", "[1,2,3]"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn solve_noiseless_infeasible_is_validation_error() {
    let out = regsel(&["solve", "--mode", "noiseless", "--reg", "linf", "--phi", "[[1,0],[2,0]]", "--y", "[1,0]"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn solve_penalized_soft_thresholds() {
    let out = regsel(&["solve", "--reg", "l1", "--phi", "[[1,0],[0,1]]", "--y", "[3,-0.5]", "--lambda", "1"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["converged"], true);
    let x: Vec<f64> = serde_json::from_value(v["x_hat"].clone()).unwrap();
    assert!((x[0] - 2.0).abs() < 1e-9 && x[1] == 0.0);
}

#[test]
fn solve_penalized_requires_lambda() {
    let out = regsel(&["solve", "--reg", "l1", "--phi", "[[1,0],[0,1]]", "--y", "[3,1]"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn solve_reports_non_convergence() {
    let out =
        regsel(&["solve", "--reg", "linf", "--phi", "[[1,0.3,0.2],[0.1,1,0.4]]", "--y", "[1,2]", "--lambda", "0.1", "--max-iter", "3"]);
    assert_eq!(code(&out), 5);
    assert_eq!(json(&out)["converged"], false);
}

#[test]
fn polar_bipolar_passes() {
    let out = regsel(&["polar", "--identity", "bipolar", "--dim", "3", "--seed", "1"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["pass"], true);
    assert_eq!(v["identities"][0]["identity"], "bipolar");
}

#[test]
fn polar_all_on_supplied_cube() {
    let cube = r#"{"vertices": [[1,1],[1,-1],[-1,1],[-1,-1]]}"#;
    let out = regsel(&["polar", "--polytope", cube, "--seed", "4"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["identities"].as_array().unwrap().len(), 6);
}

#[test]
fn cs_linf_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cs.csv");
    let out = regsel_line("--jobs 2 experiment cs-linf --n 16 --i 4 --beta 2 --trials 40 --seed 3 --out", &[csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let table = fs::read_to_string(&csv).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "N,Q,I_size,trials,success,frequency,beta,bound");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..4], ["16", "24", "4", "40"]);
    let sidecar: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("cs.json")).unwrap()).unwrap();
    assert_eq!(sidecar["config"]["command"], "cs-linf");
    assert_eq!(sidecar["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(sidecar["records"].as_array().unwrap().len(), 40);
}

#[test]
fn cs_linf_rejects_small_saturation() {
    let out = regsel(&["experiment", "cs-linf", "--n", "16", "--i", "2", "--beta", "2"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn phase_transition_grid() {
    let out = regsel(&["experiment", "phase-transition", "--n", "12", "--i", "4", "--q-grid", "6,12", "--trials", "20"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["cells"].as_array().unwrap().len(), 2);
    assert_eq!(v["predicted_crossing"], 10.0);
}

#[test]
fn sidecar_config_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pt.csv");
    let first = regsel_line(
        "experiment phase-transition --n 10 --i 4 --q-grid 7,9 --trials 15 --seed 11 --mode noiseless-recovery --out",
        &[csv.to_str().unwrap()],
    );
    assert_eq!(code(&first), 0);
    let sidecar: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("pt.json")).unwrap()).unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, sidecar["config"].to_string()).unwrap();
    let second = regsel(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&second), 0);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn run_config_with_inline_arrays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"command": "certify", "reg": "l1", "phi": [[1,0,0],[0,1,1]], "x": [5,0,0]}"#).unwrap();
    let out = regsel(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["verdict"], "identifiable");
}

#[test]
fn run_config_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"command": "decompose", "reg": "l1", "x": [1,0], "colour": "red"}"#).unwrap();
    let out = regsel(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.json");
    let out = regsel(&["decompose", "--reg", "linf", "--x", "[1,-1,0.5]", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let file = fs::read_to_string(&path).unwrap();
    assert_eq!(file.trim_end(), String::from_utf8_lossy(&out.stdout).trim_end());
    let reparsed: Value = serde_json::from_str(&file).unwrap();
    assert_eq!(reparsed, json(&out));
}
