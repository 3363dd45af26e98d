use std::fs;
use std::path::{Path, PathBuf};

use veisim_core::fixture;
use veisim_core::ingest::{write_annotations, write_gps};
use veisim_core::pipeline::{cmd_matrix, cmd_reconstruct, cmd_run, load_logs, Overrides, TimingShift};
use veisim_core::variants::VariantId;
use veisim_core::Error;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/crossing")
}

#[test]
fn checked_in_logs_match_generator() {
    assert_eq!(fs::read_to_string(fixture_dir().join("gps.csv")).unwrap(), write_gps(&fixture::gps_records()));
    assert_eq!(
        fs::read_to_string(fixture_dir().join("annotations.csv")).unwrap(),
        write_annotations(&fixture::annotation_records())
    );
}

#[test]
fn reconstruction_is_byte_identical_to_checked_in_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scenario.toml");
    let stats = cmd_reconstruct(
        &fixture_dir().join("gps.csv"),
        &fixture_dir().join("annotations.csv"),
        &out,
        TimingShift::Auto,
    )
    .unwrap();
    assert_eq!(stats.keyframes, vec![("ego".to_string(), 26), ("s1".to_string(), 26)]);
    assert_eq!(stats.dropped, 0);
    assert_eq!(fs::read(&out).unwrap(), fs::read(fixture_dir().join("scenario.toml")).unwrap());
}

#[test]
fn fixed_shift_is_stored() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.toml");
    let stats = cmd_reconstruct(
        &fixture_dir().join("gps.csv"),
        &fixture_dir().join("annotations.csv"),
        &out,
        TimingShift::Fixed(-1.5),
    )
    .unwrap();
    assert_eq!(stats.timing_shift, -1.5);
    assert!(fs::read_to_string(&out).unwrap().contains("timing_shift = -1.5"));
}

#[test]
fn parse_errors_carry_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let gps = dir.path().join("gps.csv");
    let ann = dir.path().join("ann.csv");
    fs::write(&gps, "t,lat,lon,heading,speed\n0,39.77,-86.16,90,5.6\n1,39.77,abc,90,5.6\n").unwrap();
    fs::write(&ann, "t,scooter_id,rel_x,rel_y\n0,s1,5,0\n").unwrap();
    let err = load_logs(&gps, &ann).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }));
    let msg = err.to_string();
    assert!(msg.contains("gps.csv") && msg.contains("line 3"), "{msg}");
}

#[test]
fn disjoint_logs_fail_to_synchronize() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("ann.csv");
    fs::write(&ann, "t,scooter_id,rel_x,rel_y\n100,s1,5,0\n101,s1,5,0\n").unwrap();
    let err = cmd_reconstruct(&fixture_dir().join("gps.csv"), &ann, &dir.path().join("s.toml"), TimingShift::Auto)
        .unwrap_err();
    assert!(matches!(err, Error::Sync(_)), "{err}");
}

#[test]
fn run_writes_trace_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture_dir().join("scenario.toml");
    cmd_run(&scenario, VariantId::NormalCap, dir.path(), Overrides::default()).unwrap();

    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,ego_x,ego_y,ego_heading,ego_v,ego_a,cap_mode,esc_id,esc_x,esc_y,esc_vx,esc_vy,f_des_x,f_des_y,f_veh_x,f_veh_y,gap,ttc,zone,collided"
    );
    assert_eq!(lines.count(), 501);

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["variant"], "normal-cap");
    assert_eq!(report["collided"], false);
    assert_eq!(report["safety_index"], 1.0);
    assert_eq!(report["frames"], 501);
    for key in ["safe", "attention", "alert", "collision"] {
        assert!(report["zone_seconds"][key].is_number());
    }
    let manifest = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("config_hash"));
}

#[test]
fn overrides_change_row_count_and_hash() {
    let scenario = fixture_dir().join("scenario.toml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_run(&scenario, VariantId::Baseline, a.path(), Overrides::default()).unwrap();
    let o = Overrides {
        dt: Some(0.1),
        duration: Some(10.0),
    };
    cmd_run(&scenario, VariantId::Baseline, b.path(), o).unwrap();
    let rows = fs::read_to_string(b.path().join("trace.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 101);
    let hash = |d: &Path| {
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
        m["config_hash"].as_str().unwrap().to_string()
    };
    assert_ne!(hash(a.path()), hash(b.path()));
}

#[test]
fn infinite_ttc_written_as_string() {
    let dir = tempfile::tempdir().unwrap();
    cmd_run(&fixture_dir().join("scenario.toml"), VariantId::Baseline, dir.path(), Overrides::default()).unwrap();
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.lines().any(|l| l.split(',').nth(17) == Some("inf")));
}

#[test]
fn matrix_summary_in_variant_order() {
    let dir = tempfile::tempdir().unwrap();
    let runs = cmd_matrix(&fixture_dir().join("scenario.toml"), dir.path(), Overrides::default()).unwrap();
    assert!(runs.iter().all(|r| r.result.is_ok()));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let names: Vec<&str> = summary["variants"].as_array().unwrap().iter().map(|v| v["variant"].as_str().unwrap()).collect();
    assert_eq!(names, VariantId::names());
    let std_of = |i: usize| summary["variants"][i]["speed_std"].as_f64().unwrap();
    assert!(std_of(0) > std_of(3) && std_of(0) > std_of(4));
    for id in VariantId::ALL {
        assert!(dir.path().join(id.name()).join("trace.csv").exists());
    }
}

#[test]
fn matrix_reports_failed_variants() {
    let dir = tempfile::tempdir().unwrap();
    let o = Overrides {
        dt: Some(-1.0),
        duration: None,
    };
    let runs = cmd_matrix(&fixture_dir().join("scenario.toml"), dir.path(), o).unwrap();
    assert!(runs.iter().all(|r| r.result.is_err()));
    let summary = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    assert_eq!(summary.matches("\"error\"").count(), 5);
}
