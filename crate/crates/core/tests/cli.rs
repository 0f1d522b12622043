use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use kp_conformal::scenario::read_manifest;
use serde_json::{json, Value};

fn kpconf(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_kpconf"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn small_config(out: &Path) -> Value {
    json!({
        "model": "kp_slow",
        "eps": 0.05,
        "mu": 0.5,
        "gamma": 0.5,
        "grid": {"l_x": 20.0, "l_y": 8.0, "n_x": 64, "n_y": 8},
        "topography": {"kind": "random_patch", "n_rect": 4, "support": [0.0, 4.0]},
        "initial_condition": {"type": "gaussian_derivative", "center": -5.0, "s_x": 1.0, "s_y": 2.0},
        "stepper": {"abs_tol": 1e-6, "rel_tol": 1e-6},
        "snapshot_times": [0.0, 0.5],
        "output_dir": out
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn map_of_flat_bottom_is_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("map");
    let mut cfg = small_config(&out);
    cfg["topography"] = json!({"kind": "flat"});
    let path = write_config(tmp.path(), "flat.json", &cfg);
    let (code, _, err) = kpconf(&["map", path_str(&path)]);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(out.join("strip_map.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("xi,M,x_surface,x_bottom,b"));
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[1], 1.0);
        assert_eq!(cols[0], cols[2]);
    }
}

#[test]
fn run_compare_and_export() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let path = write_config(tmp.path(), "small.json", &small_config(&out));
    let (code, _, err) = kpconf(&["run", path_str(&path)]);
    assert_eq!(code, 0, "{err}");

    let manifest = read_manifest(&out).unwrap();
    assert!(!manifest.files.is_empty());
    assert!(out.join(&manifest.strip_map_csv).is_file());
    for entry in &manifest.files {
        assert!(out.join(&entry.file).is_file(), "{}", entry.file);
        assert!(
            out.join(&entry.centerline).is_file(),
            "{}",
            entry.centerline
        );
    }

    let (code, stdout, err) = kpconf(&["compare", path_str(&out), path_str(&out)]);
    assert_eq!(code, 0, "{err}");
    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[1], 0.0);
        assert_eq!(cols[2], 0.0);
        assert_eq!(cols[3], cols[5]);
    }

    let csv = tmp.path().join("export.csv");
    let (code, _, err) = kpconf(&[
        "export",
        path_str(&out),
        "--stride",
        "4",
        "--out",
        path_str(&csv),
    ]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("xi,x,y,eta"));
    assert_eq!(text.lines().count(), 1 + 16 * 2);
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(&tmp.path().join("out"));
    cfg["surprise"] = json!(1);
    let path = write_config(tmp.path(), "bad.json", &cfg);
    let (code, _, err) = kpconf(&["run", path_str(&path)]);
    assert_eq!(code, 2);
    assert!(err.contains("surprise"), "{err}");
}

#[test]
fn missing_config_is_a_config_error() {
    let (code, _, _) = kpconf(&["map", "/nonexistent/scenario.json"]);
    assert_eq!(code, 2);
}

#[test]
fn kdv_on_a_plane_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(&tmp.path().join("out"));
    cfg["model"] = json!("kdv_conformal");
    let path = write_config(tmp.path(), "kdv.json", &cfg);
    let (code, _, _) = kpconf(&["run", path_str(&path)]);
    assert_eq!(code, 2);
}

#[test]
fn unconverged_map_is_a_solver_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(&tmp.path().join("out"));
    cfg["strip_map"] = json!({"max_iter": 1});
    let path = write_config(tmp.path(), "short.json", &cfg);
    let (code, _, err) = kpconf(&["map", path_str(&path)]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn bad_arguments_exit_with_two() {
    assert_eq!(kpconf(&["frobnicate"]).0, 2);
    assert_eq!(kpconf(&["run"]).0, 2);
}
