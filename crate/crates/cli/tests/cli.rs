mod common;

use std::path::Path;
use std::process::{Command, Output};

use clap::CommandFactory;
use common::assert_schema;
use npcolor::colorimetry::delta_e2000;
use npcolor::gamut::{alternatives_grid, build_gamut, GridParams};
use npcolor::halftone::{measure_coverages, HalftoneImage};
use npcolor::neugebauer::predict_lab;
use npcolor::press::synth_np_table;
use npcolor::{Lab, Metric, NPac, PressModel, ViewingCondition};
use npcolor_cli::cli::Cli;
use serde_json::Value;

fn npcolor(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_npcolor"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = npcolor(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn predict_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(dir.path(), &["predict", "--press", "demo_cmyk.json", "--npac", r#"{"0":0.5,"15":0.5}"#]);
    assert_schema("lab", &v);
    let press = PressModel::demo_cmyk();
    let npac = NPac::new([(0, 0.5), (15, 0.5)]).unwrap();
    let want = predict_lab(&npac, &synth_np_table(&press).unwrap(), press.yn(), &ViewingCondition::d50()).unwrap();
    assert_eq!(serde_json::from_value::<Lab>(v).unwrap(), want);
}

#[test]
fn predict_from_a_written_table_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = npcolor(p, &["press", "synth", "--press", "demo_cmyk.json", "--out", "table.json"]);
    assert!(out.status.success());
    let table: Value = serde_json::from_str(&std::fs::read_to_string(p.join("table.json")).unwrap()).unwrap();
    assert_schema("np_table", &table);
    let npac = r#"{"3":0.25,"6":0.75}"#;
    let a = ok_json(p, &["predict", "--press", "demo_cmyk.json", "--npac", npac]);
    let b = ok_json(p, &["predict", "--press", "demo_cmyk.json", "--table", "table.json", "--npac", npac]);
    assert_eq!(a, b);
}

#[test]
fn out_of_gamut_separation_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = npcolor(dir.path(), &["separate", "--press", "demo_cmyk.json", "--target", "50,90,-30"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("error: out_of_gamut"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.contains("closest surface Lab"));
}

#[test]
fn in_gamut_separation_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(dir.path(), &["separate", "--press", "demo_cmyk.json", "--target", "50,20,-30", "--objective", "min_np_count"]);
    assert!(v["delta_e2000"].as_f64().unwrap() < 0.5);
    assert_schema("npac", &v["npac"]);
}

#[test]
fn malformed_files_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("bad.json"), "{ not json").unwrap();
    for args in [
        vec!["predict", "--press", "bad.json", "--npac", r#"{"0":1}"#],
        vec!["predict", "--press", "missing.json", "--npac", r#"{"0":1}"#],
        vec!["predict", "--press", "demo_cmyk.json", "--npac", r#"{"0":0.5}"#],
        vec!["predict", "--press", "demo_cmyk.json", "--npac", r#"{"99":1}"#],
        vec!["separate", "--press", "demo_cmyk.json", "--target", "50,0"],
        vec!["chart", "measure", "--press", "demo_cmyk.json", "--chart", "bad.json"],
        vec!["press", "drift", "--press", "demo_cmyk.json", "--gains", "1,1,1"],
        vec!["halftone", "--press", "demo_cmyk.json", "--npac", r#"{"0":1}"#, "--matrix", "bayer7", "--out", "x.pgm"],
    ] {
        let out = npcolor(p, &args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = stderr(&out);
        assert!(err.starts_with("error: "), "{err}");
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    }
    for args in [vec!["predict"], vec!["frobnicate"], vec!["halftone", "--press", "demo_cmyk.json", "--out", "x"]] {
        assert_eq!(npcolor(p, &args).status.code(), Some(2), "{args:?}");
    }
    assert_eq!(npcolor(p, &["--help"]).status.code(), Some(0));
}

#[test]
fn help_lists_every_flag() {
    fn walk(cmd: &mut clap::Command, path: &mut Vec<String>) {
        let help = cmd.render_long_help().to_string();
        for arg in cmd.get_arguments() {
            if let Some(long) = arg.get_long() {
                assert!(help.contains(&format!("--{long}")), "{path:?} help misses --{long}");
            }
        }
        for sub in cmd.get_subcommands_mut() {
            path.push(sub.get_name().to_owned());
            walk(sub, path);
            path.pop();
        }
    }
    let mut cmd = Cli::command();
    cmd.build();
    walk(&mut cmd, &mut Vec::new());
}

#[test]
fn halftone_writes_a_pgm_that_measures_back() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let args = [
        "halftone", "--press", "demo_cmyk.json", "--npac", r#"{"3":0.5,"12":0.5}"#, "--size", "64x64", "--matrix",
        "bayer16", "--out", "h.pgm", "--matrix-out", "m.pgm",
    ];
    assert!(npcolor(p, &args).status.success());
    let bytes = std::fs::read(p.join("h.pgm")).unwrap();
    assert!(bytes.starts_with(b"P5"));
    let h = HalftoneImage::read(bytes.as_slice()).unwrap();
    assert_eq!((h.width, h.height), (64, 64));
    assert_eq!(measure_coverages(&h, None).unwrap(), NPac::new([(3, 0.5), (12, 0.5)]).unwrap());

    // The saved matrix reproduces the same halftone.
    let again = ["halftone", "--press", "demo_cmyk.json", "--npac", r#"{"3":0.5,"12":0.5}"#, "--size", "64x64", "--matrix", "file:m.pgm", "--out", "h2.pgm"];
    assert!(npcolor(p, &again).status.success());
    assert_eq!(std::fs::read(p.join("h2.pgm")).unwrap(), bytes);

    let out = npcolor(p, &["preview", "--press", "demo_cmyk.json", "--halftone", "h.pgm", "--out", "h.png"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(std::fs::read(p.join("h.png")).unwrap().starts_with(b"\x89PNG\r\n\x1a\n"));
}

#[test]
fn npac_image_input() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("img.json"), r#"{"width":2,"height":1,"pixels":[{"0":1.0},{"15":1.0}]}"#).unwrap();
    let out = npcolor(p, &["halftone", "--press", "demo_cmyk.json", "--image", "img.json", "--matrix", "blue8", "--out", "h.pgm"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let h = HalftoneImage::read(std::fs::read(p.join("h.pgm")).unwrap().as_slice()).unwrap();
    assert_eq!(h.ids, vec![0, 15]);
}

#[test]
fn gamut_build_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(npcolor(p, &["gamut", "build", "--press", "demo_cmyk.json", "--out", "g.json"]).status.success());
    let a = ok_json(p, &["gamut", "export", "--press", "demo_cmyk.json", "--gamut", "g.json"]);
    let b = ok_json(p, &["gamut", "export", "--press", "demo_cmyk.json"]);
    assert_schema("gamut_mesh", &a);
    assert_eq!(a, b);
    let s1 = ok_json(p, &["separate", "--press", "demo_cmyk.json", "--gamut", "g.json", "--target", "60,-20,20"]);
    let s2 = ok_json(p, &["separate", "--press", "demo_cmyk.json", "--target", "60,-20,20"]);
    assert_eq!(s1, s2);
    assert_eq!(npcolor(p, &["gamut", "build", "--press", "demo_cmyk.json", "--space", "hsv"]).status.code(), Some(1));
    assert!(npcolor(p, &["gamut", "export", "--press", "demo_8ink.json", "--gamut", "g.json"]).status.code() == Some(1));
}

#[test]
fn spot_match_equals_the_library_grid() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(dir.path(), &["spot", "match", "--press", "demo_cmyk.json", "--target", "50,20,-30", "--n-h", "2"]);
    assert_schema("alternatives_grid", &v);
    let press = PressModel::demo_cmyk();
    let gamut = build_gamut(&synth_np_table(&press).unwrap(), press.yn(), &ViewingCondition::d50()).unwrap();
    let params = GridParams { n_h: 2, ..GridParams::default() };
    let grid = alternatives_grid(&Lab::new(50.0, 20.0, -30.0), &gamut, &params, &Metric::De2000).unwrap();
    assert_eq!(v, serde_json::to_value(&grid).unwrap());
}

#[test]
fn chart_measurement_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let chart = r#"[{"0":1.0},{"coverages":[0.5,0,0,0.25]},{"5":0.5,"10":0.5}]"#;
    std::fs::write(p.join("chart.json"), chart).unwrap();
    assert_schema("chart", &serde_json::from_str(chart).unwrap());
    let a = ok_json(p, &["chart", "measure", "--press", "demo_cmyk.json", "--chart", "chart.json", "--seed", "1"]);
    let b = ok_json(p, &["chart", "measure", "--press", "demo_cmyk.json", "--chart", "chart.json", "--seed", "2"]);
    assert_eq!(a.as_array().unwrap().len(), 3);
    assert_ne!(a, b);
    let white = serde_json::from_value::<Lab>(a[0]["lab"].clone()).unwrap();
    assert!(white.l > 90.0);
}

#[test]
fn calibrate_writes_luts_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(npcolor(p, &["press", "drift", "--press", "demo_cmyk.json", "--gains", "1.12,0.92,1,1.05", "--out", "d.json"]).status.success());
    let d: Value = serde_json::from_str(&std::fs::read_to_string(p.join("d.json")).unwrap()).unwrap();
    assert_schema("press_model", &d);
    let out = npcolor(
        p,
        &["calibrate", "--press", "d.json", "--nominal", "demo_cmyk.json", "--write-reference", "ref.json", "--seed", "5", "--luts", "luts.json", "--report", "report.json"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let luts: Value = serde_json::from_str(&std::fs::read_to_string(p.join("luts.json")).unwrap()).unwrap();
    let report: Value = serde_json::from_str(&std::fs::read_to_string(p.join("report.json")).unwrap()).unwrap();
    assert_schema("lut_set", &luts);
    assert_schema("convergence_report", &report);
    assert_eq!(luts["press_id"], "demo-cmyk");
    assert!(time::OffsetDateTime::parse(luts["built_at"].as_str().unwrap(), &time::format_description::well_known::Rfc3339).is_ok());
    assert!(report["converged"].as_bool().unwrap());

    // Reusing the saved reference gives the same report.
    let again = ok_json(p, &["calibrate", "--press", "d.json", "--reference", "ref.json", "--seed", "5", "--luts", "l2.json"]);
    assert_eq!(again, report);

    // An unreachable bound fails with exit 1 but still writes its results.
    let out = npcolor(
        p,
        &["calibrate", "--press", "d.json", "--reference", "ref.json", "--threshold", "0.001", "--luts", "l3.json", "--report", "r3.json"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error: calibration did not converge"));
    assert!(p.join("l3.json").exists() && p.join("r3.json").exists());
}

#[test]
fn press_demo_and_drift_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(npcolor(p, &["press", "demo", "8ink", "--out", "eight.json"]).status.success());
    let eight: PressModel = serde_json::from_str(&std::fs::read_to_string(p.join("eight.json")).unwrap()).unwrap();
    assert_eq!(eight, PressModel::demo_8ink());
    let white = ok_json(p, &["predict", "--press", "eight.json", "--npac", r#"{"0":1}"#]);
    let lab: Lab = serde_json::from_value(white).unwrap();
    assert!(delta_e2000(&lab, &Lab::new(95.58, 0.0, 0.0)) < 1.0);
}
