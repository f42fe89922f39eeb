use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn hsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsm")).args(args).output().expect("run hsm")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json output")
}

#[test]
fn datasheet_validate_normalizes_units() {
    let v = stdout_json(&hsm(&["datasheet", "validate", path(&data("machines/vendor_datasheet.toml"))]));
    assert!(v["axes"].as_array().is_some_and(|a| !a.is_empty()));
}

#[test]
fn datasheet_gaps_for_one_sector() {
    let v = stdout_json(&hsm(&[
        "datasheet",
        "gaps",
        path(&data("machines/vendor_datasheet.toml")),
        "--sector",
        "automotive",
    ]));
    assert_eq!(v.as_object().map(|o| o.len()), Some(1));
    assert!(v["automotive"]["criteria"].is_array());
}

#[test]
fn simulate_writes_traces_and_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let out = hsm(&[
        "simulate",
        "--machine",
        path(&data("machines/measured_limits.toml")),
        "--trajectory",
        "A1-O",
        "--trajectory",
        "C2a",
        "--out",
        path(dir.path()),
    ]);
    let summary = stdout_json(&out);
    assert_eq!(summary["traces"].as_object().unwrap().len(), 2);
    assert!(dir.path().join("A1-O.csv").is_file());
    assert!(dir.path().join("C2a.csv").is_file());
    assert!(dir.path().join("protocol.json").is_file());

    let analysis = stdout_json(&hsm(&[
        "analyze",
        "trace",
        path(&dir.path().join("A1-O.csv")),
        "--commanded-feed",
        "30000",
    ]));
    let x = &analysis["attained"]["X"];
    assert!(x["v_max"].as_f64().unwrap() > 29.0);
    assert!(x["j_max"].as_f64().unwrap() <= 119.85 * 1.05);
}

#[test]
fn simulate_to_stdout_needs_one_trajectory() {
    let machine = data("machines/measured_limits.toml");
    let out = hsm(&["simulate", "--machine", path(&machine)]);
    assert_eq!(out.status.code(), Some(1));
    let out = hsm(&["simulate", "--machine", path(&machine), "--trajectory", "B1-B2"]);
    assert!(out.status.success());
    assert!(out.stdout.starts_with(b"t_s,"));
    let out = hsm(&["simulate", "--machine", path(&machine), "--trajectory", "nope"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn positioning_markdown_and_json() {
    let file = data("published/positioning.csv");
    let v = stdout_json(&hsm(&["positioning", path(&file)]));
    assert_eq!(v["X"]["status"], "computed");
    assert_eq!(v["Z"]["status"], "insufficient_data");
    let md = hsm(&["--format", "markdown", "positioning", path(&file)]);
    assert!(md.status.success());
    assert!(String::from_utf8(md.stdout).unwrap().contains('|'));
}

#[test]
fn timing_compare_verdict() {
    let v = stdout_json(&hsm(&["timing", "compare", path(&data("published/timing.csv"))]));
    assert_eq!(v["verdict"]["verdict"]["verdict"], "no_influence");
}

#[test]
fn config_thresholds_change_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hsm.toml");
    std::fs::write(&cfg, "[thresholds]\nentity = 0.01\nglobal = 0.01\n").unwrap();
    let v = stdout_json(&hsm(&[
        "--config",
        path(&cfg),
        "timing",
        "compare",
        path(&data("published/timing.csv")),
    ]));
    assert_eq!(v["verdict"]["verdict"]["verdict"], "influence");

    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let out = hsm(&["--config", path(&cfg), "timing", "compare", path(&data("published/timing.csv"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn localization_from_combined_file() {
    let v = stdout_json(&hsm(&["localization", path(&data("published/holes.csv"))]));
    assert!((v["dispersion_6s"].as_f64().unwrap() - 41.2).abs() < 0.05);
}

#[test]
fn localization_from_separate_files() {
    let dir = tempfile::tempdir().unwrap();
    let nominal = dir.path().join("nominal.csv");
    let measured = dir.path().join("measured.csv");
    std::fs::write(&nominal, "hole_id,x_mm,y_mm\nH1,0,0\nH2,10,0\nH3,20,0\n").unwrap();
    std::fs::write(&measured, "hole_id,x_mm,y_mm\nH1,0.01,0\nH2,10,0.02\nH3,20.03,0\n").unwrap();
    let v = stdout_json(&hsm(&["localization", path(&nominal), path(&measured)]));
    let devs: Vec<f64> = v["deviations"].as_array().unwrap().iter().map(|d| d.as_f64().unwrap()).collect();
    for (d, e) in devs.iter().zip([10.0, 20.0, 30.0]) {
        assert!((d - e).abs() < 1e-6);
    }
}

#[test]
fn fit_circle_and_plane() {
    let dir = tempfile::tempdir().unwrap();
    let (circle_file, plane_file) = (dir.path().join("bore.csv"), dir.path().join("faces.csv"));
    let mut csv = String::from("feature_id,x_mm,y_mm,z_mm\n");
    for k in 0..36 {
        let th = k as f64 * std::f64::consts::TAU / 36.0;
        let r = 12.5 + if k % 2 == 0 { 0.004 } else { -0.004 };
        csv.push_str(&format!("bore,{},{},0\n", 3.0 + r * th.cos(), -2.0 + r * th.sin()));
    }
    std::fs::write(&circle_file, &csv).unwrap();
    let mut csv = String::from("feature_id,x_mm,y_mm,z_mm\n");
    for i in 0..6 {
        for j in 0..6 {
            let (u, w) = (i as f64 * 10.0, j as f64 * 10.0);
            csv.push_str(&format!("top,{u},{w},{}\n", if (i + j) % 2 == 0 { 0.0 } else { 0.005 }));
            csv.push_str(&format!("side,{u},0,{w}\n"));
        }
    }
    std::fs::write(&plane_file, &csv).unwrap();

    let circles = stdout_json(&hsm(&[
        "fit",
        "circle",
        path(&circle_file),
        "--nominal-center",
        "3,-2",
        "--nominal-radius",
        "12.5",
    ]));
    let c = circles["bore"]["fitted"]["circularity"].as_f64().unwrap();
    assert!((c - 8.0).abs() < 0.1, "{c}");

    let planes = stdout_json(&hsm(&["fit", "plane", path(&plane_file), "--perpendicular", "top,side"]));
    let flat = planes["faces"]["top"]["flatness_mz"].as_f64().unwrap();
    assert!((flat - 5.0).abs() < 1e-3, "{flat}");
    assert!(planes["perpendicularity"]["defect"].as_f64().unwrap().abs() < 1.0);
}

#[test]
fn report_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("bundle.toml");
    let machine = data("machines/measured_limits.toml");
    std::fs::write(
        &manifest,
        format!(
            "machine = {:?}\npositioning = \"missing.csv\"\ntiming = {:?}\n",
            path(&machine),
            path(&data("published/timing.csv"))
        ),
    )
    .unwrap();
    let out_file = dir.path().join("report.json");
    let out = hsm(&["report", path(&manifest), "--out", path(&out_file)]);
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out_file).unwrap()).unwrap();
    assert_eq!(report["positioning"]["status"], "failed");
    assert_eq!(report["timing"]["status"], "executed");
    assert!(report["generated_at"].is_string());

    let out = hsm(&["report", path(&dir.path().join("absent.toml"))]);
    assert_eq!(out.status.code(), Some(1));
}
