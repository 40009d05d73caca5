use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tactile_servo::sensing::{ContactPose, SHEAR_RADIUS_MM};

fn tactile(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tactile")).args(args).output().unwrap()
}

fn run_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("config/runs").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(|f| f.parse().unwrap()).collect())
        .collect()
}

#[test]
fn ramp_run_writes_a_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = tactile(&["--out-dir", s(dir.path()), "run", s(&run_config("follow_ramp.toml"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("follow_ramp_seed1.csv")).unwrap();
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("follow_ramp_seed1.json")).unwrap()).unwrap();
    let steps = meta["summary"]["steps"].as_f64().unwrap() as usize;
    assert!(steps > 100);
    assert_eq!(csv.lines().count(), steps + 1);
    assert_eq!(meta["termination"], "completed");
    assert_eq!(meta["seed"], 1);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = tactile(&["--seed", "9", "--out-dir", s(dir.path()), "run", s(&run_config("push_dual.toml"))]);
        assert_eq!(out.status.code(), Some(0));
    }
    for name in ["push_dual_seed9.csv", "push_dual_seed9.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn non_positive_sigma_phi_is_rejected_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "task = \"follow_ramp\"\n\nsigma_phi_mm_deg = 0.0\n").unwrap();
    let out = tactile(&["run", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("sigma_phi_mm_deg"), "{err}");
}

#[test]
fn syntax_errors_carry_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "task = \"track\"\nseed = 1\nstep_budget = \"many\"\n").unwrap();
    let out = tactile(&["run", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn missing_controller_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "task = \"track\"\ncontroller_file = \"nowhere.toml\"\n").unwrap();
    let out = tactile(&["run", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn aborted_runs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    fs::write(&cfg, "task = \"track\"\nstep_budget = 40\n").unwrap();
    let out = tactile(&["--out-dir", s(dir.path()), "run", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let meta = fs::read_to_string(dir.path().join("track_seed1.json")).unwrap();
    assert!(meta.contains("step_budget_exhausted"));
}

#[test]
fn validate_only_has_no_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    for name in ["track.toml", "follow_ramp.toml", "follow_hemisphere.toml", "push_single.toml", "push_dual.toml"] {
        let out = tactile(&["--validate-only", "--out-dir", s(&out_dir), "run", s(&run_config(name))]);
        assert_eq!(out.status.code(), Some(0), "{name}");
    }
    let data = out_dir.join("data.csv");
    assert_eq!(tactile(&["--validate-only", "gen-dataset", "--n", "10", "--out", s(&data)]).status.code(), Some(0));
    let sweep = tactile(&["--validate-only", "--out-dir", s(&out_dir), "filter-sweep", "--levels", "1"]);
    assert_eq!(sweep.status.code(), Some(0));
    assert!(!out_dir.exists());
}

#[test]
fn dataset_has_header_and_rows_inside_the_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let out = tactile(&["--seed", "3", "gen-dataset", "--n", "6000", "--out", s(&path)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 6001);
    let rows = csv_rows(&path);
    let mut radius = 0.0;
    for row in &rows {
        let c = ContactPose::new(row[0], row[1], row[2], row[3], row[4], row[5]);
        assert!(c.in_envelope(), "{c:?}");
        radius += c.shear_radius() / rows.len() as f64;
    }
    // uniform disk: E[r] = 2 r_max / 3
    let expect = 2.0 / 3.0 * SHEAR_RADIUS_MM;
    assert!((radius / expect - 1.0).abs() < 0.01, "mean radius {radius}");
}

#[test]
fn unwritable_dataset_path_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing/dir/data.csv");
    let out = tactile(&["gen-dataset", "--n", "10", "--out", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
}

#[test]
fn vague_dynamics_sweep_matches_raw_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = tactile(&["--out-dir", s(dir.path()), "filter-sweep", "--levels", "1e6", "--steps", "1000", "--replicates", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("filter_sweep.csv"));
    assert_eq!(rows.len(), 1);
    for i in 0..6 {
        let (raw, fil) = (rows[0][1 + i], rows[0][7 + i]);
        assert!((fil / raw - 1.0).abs() < 0.05, "component {i}: {fil} vs {raw}");
    }
}

#[test]
fn sweep_is_deterministic_and_rejects_bad_levels() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = tactile(&["--out-dir", s(dir.path()), "filter-sweep", "--levels", "1,0.1", "--steps", "300", "--replicates", "2"]);
        assert_eq!(out.status.code(), Some(0));
    }
    let name = "filter_sweep.csv";
    assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    assert_eq!(tactile(&["filter-sweep", "--levels", "1,-2"]).status.code(), Some(1));
    assert_eq!(tactile(&["filter-sweep", "--levels", "0"]).status.code(), Some(1));
}

#[test]
fn unknown_arguments_exit_with_one() {
    assert_eq!(tactile(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tactile(&["gen-dataset", "--n", "0", "--out", "x.csv"]).status.code(), Some(1));
}
