use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn emacfil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emacfil")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn run_verb(verb: &str, config: &Path) -> Output {
    emacfil(&[verb, config.to_str().unwrap()])
}

fn cylinder_mesh() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets/cylinder.msh")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

/// Checks that every count a legacy VTK file declares matches what follows.
fn check_vtk(path: &Path) {
    let text = fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# vtk DataFile Version 3.0");
    assert_eq!(lines[2], "ASCII");
    assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
    let field = |line: &str, k: usize| line.split_whitespace().nth(k).unwrap().parse::<usize>().unwrap();
    let n = field(lines[4], 1);
    let mut i = 5;
    for l in &lines[i..i + n] {
        assert_eq!(l.split_whitespace().count(), 3);
    }
    i += n;
    assert!(lines[i].starts_with("CELLS "));
    let (cells, size) = (field(lines[i], 1), field(lines[i], 2));
    let mut listed = 0;
    for l in &lines[i + 1..i + 1 + cells] {
        let ids: Vec<usize> = l.split_whitespace().map(|v| v.parse().unwrap()).collect();
        assert_eq!(ids[0], 6);
        assert!(ids[1..].iter().all(|&id| id < n));
        listed += ids.len();
    }
    assert_eq!(listed, size);
    i += 1 + cells;
    assert_eq!(lines[i], format!("CELL_TYPES {cells}"));
    assert!(lines[i + 1..i + 1 + cells].iter().all(|l| *l == "22"));
    i += 1 + cells;
    assert_eq!(lines[i], format!("POINT_DATA {n}"));
    assert_eq!(lines[i + 1], "VECTORS velocity double");
    i += 2 + n;
    assert_eq!(lines[i], "SCALARS pressure double 1");
    assert_eq!(lines[i + 1], "LOOKUP_TABLE default");
    i += 2;
    assert_eq!(lines.len(), i + n);
    assert!(lines[i..].iter().all(|l| l.parse::<f64>().unwrap().is_finite()));
}

#[test]
fn gresho_smoke_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "g.json", r#"{"benchmark": "gresho", "t_end": 0.05, "output_dir": "out"}"#);
    let out = run_verb("run", &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out");
    let rows = csv_rows(&dir.join("diagnostics.csv"));
    assert_eq!(
        rows[0],
        ["t", "energy", "M1", "M2", "AM", "num_diss", "phys_diss", "drag", "lift", "newton_iters", "l2_error"]
    );
    // Initial level plus two steps of 0.025.
    assert_eq!(rows.len(), 1 + 3);
    assert_eq!(rows[1][0], "0");
    assert_eq!(rows[3][0].parse::<f64>().unwrap(), 0.05);
    // Zero viscosity and no forcing: energy changes only through the filter loss.
    let e0: f64 = rows[1][1].parse().unwrap();
    let e2: f64 = rows[3][1].parse().unwrap();
    assert!(e2 <= e0 && e2 > 0.99 * e0);
    assert!(rows[1..].iter().all(|r| r[7].is_empty() && r[8].is_empty()));
    check_vtk(&dir.join("snapshot_000000.vtk"));
    check_vtk(&dir.join("snapshot_000002.vtk"));
    assert!(!dir.join("snapshot_000001.vtk").exists());
    assert!(!dir.join("INCOMPLETE").exists());
    let s = summary(&dir);
    assert_eq!(s["steps"], 2);
    assert_eq!(s["dt"], 0.025);
    assert_eq!(s["nu"], 0.0);
    assert!(s["energy_balance_residual"].as_f64().unwrap().abs() < 1e-10);
}

#[test]
fn identical_configs_give_identical_tables() {
    let tmp = TempDir::new().unwrap();
    let json = |dir: &str| {
        format!(r#"{{"benchmark": "manufactured", "mesh": {{"nx": 4}}, "dt": 0.01, "t_end": 0.03, "output_dir": "{dir}"}}"#)
    };
    for dir in ["a", "b"] {
        let cfg = write_config(tmp.path(), &format!("{dir}.json"), &json(dir));
        assert!(run_verb("run", &cfg).status.success());
    }
    let a = fs::read(tmp.path().join("a/diagnostics.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/diagnostics.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(csv_rows(&tmp.path().join("a/diagnostics.csv")).len(), 1 + 4);
    let s = summary(&tmp.path().join("a"));
    assert!(s["l2_h1_error"].as_f64().unwrap() > 0.0);
    assert!(s["final_l2_error"].as_f64().unwrap() < 1e-2);
}

#[test]
fn snapshot_cadence() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"benchmark": "manufactured", "mesh": {"nx": 2}, "dt": 0.01, "t_end": 0.05,
            "snapshot_every": 2, "pressure_output": "emac"}"#,
    );
    assert!(run_verb("run", &cfg).status.success());
    let dir = tmp.path().join("output");
    for step in 0..=5 {
        let present = dir.join(format!("snapshot_{step:06}.vtk")).exists();
        assert_eq!(present, matches!(step, 0 | 2 | 4 | 5), "step {step}");
    }
    check_vtk(&dir.join("snapshot_000004.vtk"));
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = TempDir::new().unwrap();
    let bad = write_config(tmp.path(), "bad.json", r#"{"benchmark": "gresho", "filtre": false}"#);
    let out = run_verb("run", &bad);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("filtre"));

    let cyl = write_config(tmp.path(), "cyl.json", r#"{"benchmark": "cylinder"}"#);
    let out = run_verb("run", &cyl);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mesh"));

    let typed = write_config(tmp.path(), "typed.json", r#"{"benchmark": "gresho", "snapshot_every": 1.5}"#);
    let out = run_verb("run", &typed);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("snapshot_every"));

    let marker = write_config(
        tmp.path(),
        "marker.json",
        r#"{"benchmark": "custom", "dt": 0.1, "t_end": 0.1, "mesh": {"nx": 2},
            "custom": {"boundary": {"lid": [1, 0]}}}"#,
    );
    let out = run_verb("run", &marker);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lid"));

    assert_eq!(emacfil(&["launch"]).status.code(), Some(2));
}

#[test]
fn io_errors_exit_with_4() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("none.json");
    assert_eq!(run_verb("run", &missing).status.code(), Some(4));
    assert_eq!(emacfil(&["mesh-info", missing.to_str().unwrap()]).status.code(), Some(4));
    // The output directory cannot be created under a regular file.
    fs::write(tmp.path().join("blocker"), "").unwrap();
    let cfg = write_config(
        tmp.path(),
        "io.json",
        r#"{"benchmark": "manufactured", "mesh": {"nx": 2}, "dt": 0.01, "t_end": 0.01, "output_dir": "blocker/out"}"#,
    );
    assert_eq!(run_verb("run", &cfg).status.code(), Some(4));
}

#[test]
fn solver_failure_leaves_partial_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "f.json",
        r#"{"benchmark": "manufactured", "mesh": {"nx": 2}, "dt": 0.01, "t_end": 0.02,
            "newton_abs_tol": 1e-300, "newton_rel_tol": 1e-300, "newton_max_iter": 2}"#,
    );
    let out = run_verb("run", &cfg);
    assert_eq!(out.status.code(), Some(3));
    let dir = tmp.path().join("output");
    let marker = fs::read_to_string(dir.join("INCOMPLETE")).unwrap();
    assert!(marker.contains("Newton"), "{marker}");
    assert_eq!(csv_rows(&dir.join("diagnostics.csv")).len(), 2);
    assert!(dir.join("snapshot_000000.vtk").exists());
    assert!(!dir.join("summary.json").exists());
}

#[test]
fn manufactured_sweep_tabulates_rates() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "s.json",
        r#"{"benchmark": "manufactured", "dt": 1e-5, "t_end": 1e-4, "sweep": {"h": [0.125, 0.25]}, "output_dir": "sw"}"#,
    );
    let out = run_verb("sweep", &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("sw");
    assert!(dir.join("h_0.25/diagnostics.csv").exists());
    assert!(dir.join("h_0.125/summary.json").exists());
    let rows = csv_rows(&dir.join("convergence.csv"));
    assert_eq!(rows[0], ["h", "l2_h1_error", "rate", "final_l2_error"]);
    assert_eq!(rows[1][0], "0.25");
    assert!(rows[1][2].is_empty());
    let rate: f64 = rows[2][2].parse().unwrap();
    assert!((rate - 2.0).abs() < 0.05, "{rate}");
    let s: Value = serde_json::from_str(&fs::read_to_string(dir.join("sweep_summary.json")).unwrap()).unwrap();
    assert_eq!(s["members"].as_array().unwrap().len(), 2);

    let none = write_config(tmp.path(), "n.json", r#"{"benchmark": "manufactured"}"#);
    assert_eq!(run_verb("sweep", &none).status.code(), Some(2));
}

#[test]
fn compare_writes_both_schemes_and_deltas() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "cmp.json",
        r#"{"benchmark": "gresho", "mesh": {"nx": 12}, "t_end": 0.075, "output_dir": "cmp"}"#,
    );
    let out = run_verb("compare", &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("cmp");
    assert_eq!(summary(&dir.join("filtered"))["filter_enabled"], true);
    assert_eq!(summary(&dir.join("unfiltered"))["filter_enabled"], false);
    let rows = csv_rows(&dir.join("comparison.csv"));
    assert_eq!(rows.len(), 1 + 4);
    assert_eq!(rows[0][1..4], ["energy_filtered", "energy_unfiltered", "energy_delta"]);
    let delta = |r: &[String]| r[3].parse::<f64>().unwrap();
    // Same initial data, and the startup step is shared.
    assert_eq!(delta(&rows[1]), 0.0);
    assert_eq!(delta(&rows[2]), 0.0);
    assert!(delta(&rows[4]) != 0.0);
}

#[test]
fn cylinder_summary_reports_force_peaks() {
    let tmp = TempDir::new().unwrap();
    let json = format!(
        r#"{{"benchmark": "cylinder", "mesh": {{"file": "{}"}}, "t_end": 0.02}}"#,
        cylinder_mesh().display()
    );
    let cfg = write_config(tmp.path(), "cyl.json", &json);
    let out = run_verb("run", &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("output");
    let s = summary(&dir);
    for key in ["c_d_max", "t_c_d_max", "c_l_max", "t_c_l_max"] {
        assert!(s[key].as_f64().unwrap().is_finite(), "{key}");
    }
    assert_eq!(s["nu"], 1e-3);
    let rows = csv_rows(&dir.join("diagnostics.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows[1][7].is_empty());
    assert!(rows[2][7].parse::<f64>().is_ok() && rows[3][8].parse::<f64>().is_ok());
    check_vtk(&dir.join("snapshot_000002.vtk"));
}

#[test]
fn custom_shear_layer() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "lid.json",
        r#"{"benchmark": "custom", "mesh": {"nx": 4}, "dt": 0.05, "t_end": 0.1, "nu": 0.01,
            "custom": {"boundary": {"top": [1, 0], "bottom": [0, 0]},
                       "force_marker": "bottom"}}"#,
    );
    let out = run_verb("run", &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("output");
    let rows = csv_rows(&dir.join("diagnostics.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows[3][1].parse::<f64>().unwrap() > 0.0);
    assert!(rows[3][10].is_empty());
    assert!(rows[3][7].parse::<f64>().is_ok());

    // The lid and the side walls disagree at the top corners.
    let clash = write_config(
        tmp.path(),
        "clash.json",
        r#"{"benchmark": "custom", "mesh": {"nx": 4}, "dt": 0.05, "t_end": 0.1,
            "custom": {"boundary": {"top": [1, 0], "left": [0, 0]}}}"#,
    );
    assert_eq!(run_verb("run", &clash).status.code(), Some(2));
}

#[test]
fn mesh_info_reports_markers_and_dofs() {
    let out = emacfil(&["mesh-info", cylinder_mesh().to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for m in ["inflow", "outflow", "walls", "cylinder"] {
        assert!(text.contains(m), "{text}");
    }
    assert!(text.contains("= 10100"), "{text}");
}
