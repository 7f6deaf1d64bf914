//! End-to-end checks of the binary: exit codes, artifacts, determinism.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ruelle"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn small_config(dir: &Path, out: &Path) -> PathBuf {
    write_config(
        dir,
        "small.json",
        &format!(
            r#"{{
  "map": {{"degree": 2, "p_hat": [[1, 0.0, -0.025]]}},
  "class": {{"kind": "analytic", "k_max": 128}},
  "theta": 1.5,
  "k_list": [12, 16],
  "n_traces": 8,
  "out_dir": "{}"
}}"#,
            out.display()
        ),
    )
}

#[test]
fn malformed_config_exits_2() {
    let tmp = std::env::temp_dir().join("ruelle_cli_bad");
    std::fs::create_dir_all(&tmp).unwrap();
    let cfg = write_config(&tmp, "bad.json", "{ not json");
    let status = bin().args(["class"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(2));

    // Parse errors carry a location.
    let out = bin().args(["class"]).arg(&cfg).output().unwrap();
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line"), "stderr: {err}");
}

#[test]
fn invalid_theta_exits_2() {
    let tmp = std::env::temp_dir().join("ruelle_cli_theta");
    std::fs::create_dir_all(&tmp).unwrap();
    let cfg = small_config(&tmp, &tmp.join("out"));
    let status = bin()
        .args(["spectrum"])
        .arg(&cfg)
        .args(["--theta", "3.5"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn class_artifacts_and_determinism() {
    let tmp = std::env::temp_dir().join("ruelle_cli_class");
    std::fs::create_dir_all(&tmp).unwrap();
    let out_a = tmp.join("a");
    let out_b = tmp.join("b");
    let cfg = small_config(&tmp, &out_a);

    let status = bin().args(["class"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let table = std::fs::read_to_string(out_a.join("weight_table.csv")).unwrap();
    assert!(table.starts_with("x,w,k_of_x,saturated\n"));
    let report = std::fs::read_to_string(out_a.join("class_report.json")).unwrap();
    assert!(report.contains("\"schema\": \"ruelle-kit/1\""));

    let status = bin()
        .args(["class"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_b)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report_b = std::fs::read_to_string(out_b.join("class_report.json")).unwrap();
    assert_eq!(report, report_b, "reports must be byte-identical");
}

#[test]
fn determinant_and_verify_small_map() {
    let tmp = std::env::temp_dir().join("ruelle_cli_det");
    std::fs::create_dir_all(&tmp).unwrap();
    let out = tmp.join("out");
    let cfg = small_config(&tmp, &out);

    let status = bin().args(["determinant"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let report = std::fs::read_to_string(out.join("determinant_report.json")).unwrap();
    assert!(report.contains("\"orbit\""));
    assert!(report.contains("\"agreements\""));
    assert!(out.join("periodic_orbits.csv").exists());

    let status = bin().args(["spectrum"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(0));
    // K = 16 is small enough for the CSV form of the matrix export.
    assert!(out.join("transfer_matrix.bin").exists());
    assert!(out.join("transfer_matrix.csv").exists());
    let sidecar = std::fs::read_to_string(out.join("transfer_matrix.json")).unwrap();
    assert!(sidecar.contains("\"quad_size\""));
    assert!(sidecar.contains("\"map_hash\""));

    let status = bin()
        .args(["verify"])
        .arg(&cfg)
        .env("RUELLE_THREADS", "2")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0), "verify must pass on the small map");
    let report = std::fs::read_to_string(out.join("verify_report.json")).unwrap();
    assert!(report.contains("\"failures\": 0"));
}
