mod common;

use std::path::Path;
use std::process::Command;

use common::{model_path, model_src, shipped};
use lft_multibody::cli::*;
use lft_multibody::lft::{BoundsMode, Point};
use lft_multibody::Error;

fn lftmb(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lftmb")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn schema_error(src: &str) -> (String, String) {
    match load_model_str(src) {
        Err(Error::Schema { section, field, .. }) => (section, field),
        other => panic!("expected a schema error, got {other:?}"),
    }
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_keys_are_rejected() {
    let src = model_src("pendulum").replacen("axis = [1.0, 0.0, 0.0]", "axis = [1.0, 0.0, 0.0]\nspring = 3.0", 1);
    let (section, field) = schema_error(&src);
    assert!(section.contains("connections"), "{section}");
    assert_eq!(field, "spring");
}

#[test]
fn units_are_mandatory_and_checked() {
    let src = model_src("pendulum").replacen("mass = { value = 2.0, unit = \"kg\" }", "mass = { value = 2.0 }", 1);
    let (section, _) = schema_error(&src);
    assert!(section.contains("bodies"));
    let src = model_src("pendulum").replacen("unit = \"kg\"", "unit = \"g\"", 1);
    assert_eq!(schema_error(&src), ("bodies.bob".to_string(), "mass".to_string()));
}

#[test]
fn angles_need_an_explicit_unit() {
    let src = model_src("pendulum").replacen(
        "angle = { value = 0.0, unit = \"deg\" }",
        "angle = { value = 0.0 }",
        1,
    );
    assert_eq!(schema_error(&src), ("connections.J".to_string(), "angle".to_string()));
    let src = model_src("pendulum").replacen("unit = \"deg\"", "unit = \"grad\"", 1);
    assert_eq!(schema_error(&src), ("connections.J".to_string(), "angle".to_string()));
}

#[test]
fn unknown_parameter_in_expression() {
    let src = model_src("pendulum").replacen("\"-L\"", "\"-L - q\"", 1);
    assert_eq!(schema_error(&src), ("bodies.bob".to_string(), "cog".to_string()));
}

#[test]
fn degrees_and_radians_agree() {
    let deg = shipped("balloon_planar");
    let rad = load_model_str(&model_src("balloon_planar").replacen(
        "angle = { value = 40.0, unit = \"deg\" }",
        &format!("angle = {{ value = {}, unit = \"rad\" }}", 40f64.to_radians()),
        1,
    ))
    .unwrap();
    assert_eq!(deg, rad);
}

#[test]
fn pendulum_equilibrium_report() {
    let r = cmd_equilibrium(&shipped("pendulum")).unwrap();
    assert_eq!(r.equilibrium.joints[0].torque, 0.0);
    assert_eq!(r.equilibrium.joints[0].angle_rad, 0.0);
    let (code, out, _) = lftmb(&["equilibrium", path_str(&model_path("pendulum"))]);
    assert_eq!(code, 0);
    assert!(out.contains("joint J"));
}

#[test]
fn arm_report_lists_exactly_its_parameters() {
    let (lm, report) = cmd_linearize(&shipped("two_link_arm"), LinearizeFlags::default()).unwrap();
    assert_eq!(report.n_states, Some(4));
    let names: Vec<&str> = report.occurrences.iter().map(|o| o.param.as_str()).collect();
    assert_eq!(names, ["J1", "L2", "m1", "m3", "rho1", "t1", "t2"]);
    let structure = lm.system.system.delta_structure();
    for row in &report.occurrences {
        let n: usize = structure.iter().filter(|(p, _)| p == &row.param).map(|(_, k)| k).sum();
        assert_eq!(row.after, n);
        assert!(row.after <= row.before);
    }
}

#[test]
fn balloon_equilibrium_is_balanced() {
    let r = cmd_equilibrium(&shipped("balloon_planar")).unwrap();
    let total = r.equilibrium.root_residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(total <= 1e-9 * 1e5, "{total}");
    assert!(r.trim_residual <= 1e-9);
}

#[test]
fn linearize_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let model = model_path("two_link_arm");
    for out in [&a, &b] {
        let (code, _, err) = lftmb(&["linearize", path_str(&model), "-o", path_str(out)]);
        assert_eq!(code, 0, "{err}");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let lm = lft_multibody::assembly::LinearLftModel::from_json(&std::fs::read_to_string(&a).unwrap()).unwrap();
    let direct = lft_multibody::assembly::assemble(&shipped("two_link_arm"), Default::default()).unwrap();
    let p = shipped("two_link_arm").params.nominal_point();
    let x = lft_multibody::assembly::sample_model(&lm, &p, BoundsMode::Strict).unwrap();
    let y = lft_multibody::assembly::sample_model(&direct, &p, BoundsMode::Strict).unwrap();
    assert!((&x.a - &y.a).norm() <= 1e-12 * y.a.norm());
}

#[test]
fn strict_bounds_and_no_reduce_flags() {
    let model = shipped("two_link_arm");
    let (full, r_full) = cmd_linearize(&model, LinearizeFlags { no_reduce: true, strict_bounds: false }).unwrap();
    let (red, _) = cmd_linearize(&model, LinearizeFlags { no_reduce: false, strict_bounds: true }).unwrap();
    assert!(r_full.occurrences.iter().all(|o| o.before == o.after));
    let n_full: usize = full.occurrences().values().sum();
    let n_red: usize = red.occurrences().values().sum();
    assert!(n_red <= n_full);
}

#[test]
fn arm_grid_writes_one_file_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let export = dir.path().join("arm.json");
    let out = dir.path().join("grid");
    lftmb(&["linearize", path_str(&model_path("two_link_arm")), "-o", path_str(&export)]);
    let (code, _, err) = lftmb(&[
        "sample",
        path_str(&export),
        "--grid",
        "theta1=45:90:10@deg",
        "--grid",
        "t2=45:135:10@deg",
        "-o",
        path_str(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    let n_json = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("point_"))
        .count();
    assert_eq!(n_json, 100);
    let index = std::fs::read_to_string(out.join("points.csv")).unwrap();
    assert_eq!(index.lines().count(), 101);
}

#[test]
fn balloon_sweep_writes_poles() {
    let lm = lft_multibody::assembly::assemble(&shipped("balloon_planar"), Default::default()).unwrap();
    let axes = vec![parse_grid("l6=10:60:20", &lm.params).unwrap()];
    let pts = grid_points(&axes);
    assert_eq!(pts.len(), 20);
    let dir = tempfile::tempdir().unwrap();
    cmd_sample(&lm, &pts, dir.path(), BoundsMode::Strict).unwrap();
    for i in [0, 19] {
        let csv = std::fs::read_to_string(dir.path().join(format!("poles_{i:04}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(POLES_HEADER));
        assert_eq!(lines.count(), 26);
    }
}

#[test]
fn nominal_sample_equals_direct_build() {
    let lm = lft_multibody::assembly::assemble(&shipped("pendulum"), Default::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    cmd_sample(&lm, &[Point::new()], dir.path(), BoundsMode::Strict).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("point_0000.json")).unwrap()).unwrap();
    let a01 = v["a"][0][1].as_f64().unwrap();
    let direct = lm.system.nominal().a[(0, 1)];
    assert!((a01 - direct).abs() <= 1e-14 * direct.abs());
}

#[test]
fn grid_spec_errors() {
    let params = shipped("two_link_arm").params;
    assert!(parse_grid("m1=1:2", &params).is_err());
    assert!(parse_grid("zz=1:2:3", &params).is_err());
    assert!(parse_grid("m1=1:2:3@deg", &params).is_err());
    let (name, v) = parse_grid("theta2=90:90:1@deg", &params).unwrap();
    assert_eq!(name, "t2");
    assert!((v[0] - 1.0).abs() < 1e-15);
}

#[test]
fn validate_passes_on_shipped_models() {
    let r = cmd_validate(&shipped("pendulum"), 5, 1).unwrap();
    let v = r.validation.unwrap();
    assert!(v.max_rel_a <= 1e-7 && v.max_rel_b <= 1e-7);
    let r = cmd_validate(&shipped("two_link_arm"), 20, 42).unwrap();
    let v = r.validation.unwrap();
    assert!(v.max_rel_a <= 1e-5 && v.max_rel_b <= 1e-5);
    let (code, out, _) = lftmb(&["validate", path_str(&model_path("balloon_planar")), "--points", "0"]);
    assert_eq!(code, 0);
    assert!(out.contains("PASS"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, model_src("pendulum").replacen("unit = \"kg\"", "unit = \"lb\"", 1)).unwrap();
    let (code, _, err) = lftmb(&["equilibrium", path_str(&bad)]);
    assert_eq!(code, EXIT_SCHEMA);
    assert!(err.contains("bodies.bob") && err.contains("mass"), "{err}");

    let unbalanced = dir.path().join("unbalanced.toml");
    std::fs::write(
        &unbalanced,
        model_src("balloon_planar").replacen("balance = true", "force = { value = [0.0, 50.0, 0.0], unit = \"N\" }", 1),
    )
    .unwrap();
    let (code, _, _) = lftmb(&["equilibrium", path_str(&unbalanced)]);
    assert_eq!(code, EXIT_NUMERICAL);

    assert_eq!(exit_code(&Error::Validation("x".into())), EXIT_VALIDATION);
    assert_eq!(exit_code(&Error::GimbalLock { cos_pitch: 0.0 }), EXIT_NUMERICAL);
}
