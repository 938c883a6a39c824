use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use waterbands::bands::{sweep, ThetaGrid};
use waterbands::io::output::parse_band_csv;
use waterbands::io::parse_config;
use waterbands::io::run::GapReport;

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{sub}.json"));
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_waterbands"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn small(bathymetry: &str, eps: &str) -> String {
    format!(
        r#"{{"bathymetry": {bathymetry}, "epsilon_list": {eps},
            "grid": {{"n_x": 16, "n_z": 12, "oversample": 4}},
            "theta_grid": {{"count": 9}}, "n_bands": 5}}"#
    )
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bands_csv_matches_the_library() {
    let dir = TempDir::new().unwrap();
    let cfg = small(r#"{"cosine_series": [[2, 2.0, 0.0]]}"#, "[0.05]");
    let out = run(dir.path(), "bands", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/bands_eps0.05.csv")).unwrap();
    assert!(!csv.contains('\r'));
    assert!(csv.starts_with("theta,lambda_0,lambda_1,lambda_2,lambda_3,lambda_4\n"));
    let (thetas, rows) = parse_band_csv(&csv).unwrap();

    let exp = parse_config(&cfg).unwrap();
    let b = sweep(&exp.profile, 0.05, &exp.grid, &exp.theta_grid, 5).unwrap();
    assert_eq!(thetas, b.theta_grid.values());
    assert_eq!(rows, b.bands);
    // the first-order gap sits around tanh 1
    let top = rows[1].iter().copied().fold(f64::MIN, f64::max);
    let bottom = rows[2].iter().copied().fold(f64::MAX, f64::min);
    assert!(top < 0.7616 && 0.7616 < bottom);
    let svg = fs::read_to_string(dir.path().join("out/bands_eps0.05.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 5);
}

#[test]
fn bands_are_byte_identical_across_threads() {
    let dir = TempDir::new().unwrap();
    let cfg = small(r#"{"cosine_series": [[1, 1.0, 0.3], [2, 0.5, 0.0]]}"#, "[0.1]");
    let mut files = Vec::new();
    for threads in ["1", "4"] {
        let out = run(dir.path(), "bands", &cfg, &["--threads", threads]);
        assert!(out.status.success());
        let csv = fs::read(dir.path().join("out/bands_eps0.1.csv")).unwrap();
        let svg = fs::read(dir.path().join("out/bands_eps0.1.svg")).unwrap();
        files.push((csv, svg));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn flat_bottom_gaps_are_closed() {
    let dir = TempDir::new().unwrap();
    let cfg = small(r#"{"cosine_series": []}"#, "[0.0]");
    let out = run(dir.path(), "gaps", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = fs::read_to_string(dir.path().join("out/gap_report.json")).unwrap();
    let report: GapReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.schema_version, 1);
    let e = &report.entries[0];
    assert!(e.measured.width <= 1e-12);
    let pred = e.predicted.as_ref().unwrap();
    assert_eq!(pred.upper_edge - pred.lower_edge, 0.0);
    assert!(e.deviation.unwrap().is_finite());
}

#[test]
fn gap_report_rejects_unknown_fields() {
    let dir = TempDir::new().unwrap();
    let cfg = small(r#"{"cosine_series": [[2, 2.0, 0.0]]}"#, "[0.02]");
    assert!(run(dir.path(), "gaps", &cfg, &[]).status.success());
    let mut doc = read_json(&dir.path().join("out/gap_report.json"));
    assert!(serde_json::from_value::<GapReport>(doc.clone()).is_ok());
    doc["future_field"] = Value::Bool(true);
    assert!(serde_json::from_value::<GapReport>(doc).is_err());
}

#[test]
fn second_order_predictor_engages_without_the_resonant_mode() {
    let dir = TempDir::new().unwrap();
    let cfg = small(r#"{"cosine_series": [[1, 2.0, 0.0], [3, 2.0, 0.0]]}"#, "[0.05]");
    let out = run(dir.path(), "predict", &cfg, &[]);
    assert!(out.status.success());
    let doc = read_json(&dir.path().join("out/predictions.json"));
    assert_eq!(doc["entries"][0]["prediction"]["order"], 2);
    let cfg = small(r#"{"cosine_series": [[2, 2.0, 0.0]]}"#, "[0.05]");
    assert!(run(dir.path(), "predict", &cfg, &[]).status.success());
    let doc = read_json(&dir.path().join("out/predictions.json"));
    assert_eq!(doc["entries"][0]["prediction"]["order"], 1);
}

#[test]
fn quasimode_report() {
    let dir = TempDir::new().unwrap();
    let cfg = small(r#"{"cosine_series": [[2, 2.0, 0.0]]}"#, "[0.02]");
    let out = run(dir.path(), "quasimode", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("out/quasimodes.json"));
    let entries = doc["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    let idx: Vec<u64> = entries
        .iter()
        .map(|e| e["certificate"]["index"].as_u64().unwrap())
        .collect();
    assert_ne!(idx[0], idx[1]);
}

#[test]
fn validate_passes_and_flags_underresolution() {
    let dir = TempDir::new().unwrap();
    let good = r#"{"bathymetry": {"cosine_series": [[2, 2.0, 0.0]]}, "epsilon_list": [0.05],
                   "grid": {"n_x": 32, "n_z": 32}}"#;
    let out = run(dir.path(), "validate", good, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let doc = read_json(&dir.path().join("out/validation.json"));
    assert_eq!(doc["passed"], true);

    let coarse = r#"{"bathymetry": {"cosine_series": [[2, 2.0, 0.0]]}, "epsilon_list": [0.05],
                     "grid": {"n_x": 32, "n_z": 8}}"#;
    let out = run(dir.path(), "validate", coarse, &[]);
    assert_eq!(out.status.code(), Some(1));
    let doc = read_json(&dir.path().join("out/validation.json"));
    let flat = doc["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "flat_exactness")
        .unwrap();
    assert_eq!(flat["status"], "fail");
    assert!(flat["measured"].as_f64().unwrap() > 1e-8);
}

#[test]
fn validate_on_flat_bottom_reports_exact_zeros() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"bathymetry": {"cosine_series": []}, "epsilon_list": [0.0], "grid": {"n_x": 32, "n_z": 32}}"#;
    let out = run(dir.path(), "validate", cfg, &[]);
    assert_eq!(out.status.code(), Some(0));
    let doc = read_json(&dir.path().join("out/validation.json"));
    let checks = doc["checks"].as_array().unwrap();
    let get = |n: &str| checks.iter().find(|c| c["name"] == n).unwrap().clone();
    assert_eq!(get("coupling_integrals")["measured"].as_f64(), Some(0.0));
    assert_eq!(get("residual_scaling")["status"], "skipped");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let cases = [
        "{\"bathymetry\": ",
        r#"{"bathymetry": {"cosine_series": [[2, 2.0, 0.0]]}, "epsilon_list": [0.6]}"#,
        r#"{"bathymetry": {"cosine_series": [[2, 2.0, 0.0]]}, "epsilon_list": [0.1], "grid": {"n_x": 15}}"#,
        r#"{"bathymetry": {"cosine_series": [[2, 2.0, 0.0]]}, "epsilon_list": [0.1], "unknown": 1}"#,
    ];
    for cfg in cases {
        let out = run(dir.path(), "bands", cfg, &[]);
        assert_eq!(out.status.code(), Some(2), "{cfg}");
        assert!(!out.stderr.is_empty());
    }
    let out = Command::new(env!("CARGO_BIN_EXE_waterbands"))
        .args(["bands", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn chebyshev_theta_grid_is_accepted() {
    let exp = parse_config(
        r#"{"bathymetry": {"cosine_series": []}, "epsilon_list": [0.0], "theta_grid": {"kind": "chebyshev", "count": 9}}"#,
    )
    .unwrap();
    assert_eq!(exp.theta_grid, ThetaGrid::chebyshev(9).unwrap());
}
