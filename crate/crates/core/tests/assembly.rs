mod common;

use common::{edited, shipped, G};
use lft_multibody::assembly::*;
use lft_multibody::lft::{BoundsMode, Mat, ParamKind, Point};
use lft_multibody::oracle::{fd_linearize, rel_frobenius, FdConfig, NonlinearEvaluator};
use lft_multibody::spatial::{euler_matrix, V3};
use lft_multibody::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn equilibrium(model: &MultibodyModel, point: &Point) -> EquilibriumReport {
    let sol = step2_wrenches(model, step1_geometry(model).unwrap()).unwrap();
    equilibrium_report(model, &sol, point).unwrap()
}

fn arm_point(th1_deg: f64, th2_deg: f64) -> Point {
    let arm = shipped("two_link_arm");
    let mut p = arm.params.nominal_point();
    p.insert("t1".into(), (th1_deg.to_radians() / 2.0).tan());
    p.insert("t2".into(), (th2_deg.to_radians() / 2.0).tan());
    p
}

fn sorted_eigs(a: &Mat) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = a.complex_eigenvalues().iter().map(|l| (l.re, l.im)).collect();
    v.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.total_cmp(&y.0)));
    v
}

#[test]
fn pendulum_oscillates_at_sqrt_g_over_l() {
    let model = shipped("pendulum");
    let lm = assemble(&model, AssemblyOptions::reduced()).unwrap();
    assert_eq!(lm.n_states(), 2);
    for l in [0.8, 0.95, 1.0, 1.2] {
        let p = Point::from([("L".to_string(), l)]);
        let ss = sample_model(&lm, &p, BoundsMode::Strict).unwrap();
        let w = (G / l).sqrt();
        for (re, im) in sorted_eigs(&ss.a) {
            assert!(re.abs() <= 1e-9 * w);
            assert!((im.abs() - w).abs() <= 1e-9 * w, "L = {l}: {im} vs {w}");
        }
    }
}

#[test]
fn damped_pendulum_matches_closed_form() {
    let k_j = 0.7;
    let model = edited(
        "pendulum",
        "angle = { value = 0.0, unit = \"deg\" }",
        &format!("angle = {{ value = 0.0, unit = \"deg\" }}\nfriction = {{ value = {k_j}, unit = \"N*m*s/rad\" }}"),
    );
    let lm = assemble(&model, AssemblyOptions::reduced()).unwrap();
    let (m, l, js) = (2.0, 1.1, 1e-10);
    let p = Point::from([("L".to_string(), l)]);
    let ss = sample_model(&lm, &p, BoundsMode::Strict).unwrap();
    let inertia = m * l * l + js;
    let disc = k_j * k_j - 4.0 * inertia * m * G * l;
    assert!(disc < 0.0);
    let re = -k_j / (2.0 * inertia);
    let im = (-disc).sqrt() / (2.0 * inertia);
    let got = sorted_eigs(&ss.a);
    assert!((got[0].0 - re).abs() <= 1e-9 * im && (got[0].1 + im).abs() <= 1e-9 * im);
    assert!((got[1].0 - re).abs() <= 1e-9 * im && (got[1].1 - im).abs() <= 1e-9 * im);
    let md = modes(&ss.a);
    assert!((md[0].damping - k_j / (2.0 * (inertia * m * G * l).sqrt())).abs() < 1e-9);
}

#[test]
fn arm_geometry_follows_joint_angles() {
    let arm = shipped("two_link_arm");
    let eq = equilibrium(&arm, &arm.params.nominal_point());
    assert!((eq.bodies[1].euler_rad[0].abs() - std::f64::consts::PI).abs() < 1e-12);
    for (a1, a2) in [(45.0, 45.0), (60.0, 100.0), (90.0, 135.0), (72.0, 50.0)] {
        let eq = equilibrium(&arm, &arm_point(a1, a2));
        let phi = (a1 + a2).to_radians();
        let got = eq.bodies[1].euler_rad[0];
        assert!((got.sin() - phi.sin()).abs() < 1e-12 && (got.cos() - phi.cos()).abs() < 1e-12);
        assert!((eq.bodies[0].euler_rad[0] - a1.to_radians()).abs() < 1e-12);
    }
}

#[test]
fn arm_joint_one_carries_total_weight() {
    let arm = shipped("two_link_arm");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut points = vec![arm.params.nominal_point()];
    points.extend((0..10).map(|_| arm.params.random_point(&mut rng)));
    for p in points {
        let eq = equilibrium(&arm, &p);
        let e = eq.bodies[0].euler_rad;
        let rot = euler_matrix(&V3::new(e[0], e[1], e[2]));
        let w = eq.joints[0].wrench_child_on_joint;
        let f = rot * V3::new(w[0], w[1], w[2]);
        let total = p["m1"] + 2.0 + p["m3"];
        assert!(f.x.abs() < 1e-10 && f.y.abs() < 1e-10);
        assert!((f.z + total * G).abs() < 1e-10 * total * G, "{f:?}");
    }
}

#[test]
fn arm_holding_torques_match_statics() {
    let arm = shipped("two_link_arm");
    let eq = equilibrium(&arm, &arm.params.nominal_point());
    assert!((eq.joints[1].torque.abs() - 58.86).abs() < 1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let p = arm.params.random_point(&mut rng);
        let eq = equilibrium(&arm, &p);
        let th1 = 2.0 * p["t1"].atan();
        let th2 = 2.0 * p["t2"].atan();
        let l2 = p["L2"];
        let outer = G * l2 * (1.0 + p["m3"]) * (th1 + th2).cos();
        let inner = G * (p["m1"] * p["rho1"] + 2.0 + p["m3"]) * th1.cos() + outer;
        assert!((eq.joints[1].torque - outer).abs() < 1e-10 * (1.0 + outer.abs()));
        assert!((eq.joints[0].torque - inner).abs() < 1e-10 * (1.0 + inner.abs()));
        let ev = NonlinearEvaluator::new(&arm, &p).unwrap();
        let id = ev.trim_torques().unwrap();
        assert!((id[0] - inner).abs() < 1e-9 && (id[1] - outer).abs() < 1e-9);
    }
}

#[test]
fn revolute_equilibrium_identity() {
    for name in ["pendulum", "two_link_arm", "balloon_planar"] {
        let model = shipped(name);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let p = model.params.random_point(&mut rng);
            let eq = equilibrium(&model, &p);
            for j in &eq.joints {
                let ci = model.connection_index(&j.name).unwrap();
                let lft_multibody::joints::Connection::Revolute(joint) = &model.connections[ci] else {
                    panic!()
                };
                let ra = joint.axis_child();
                let w = &j.wrench_child_on_joint;
                let r = j.torque + ra.dot(&V3::new(w[3], w[4], w[5]));
                let scale = 1.0 + w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(r.abs() <= 1e-10 * scale, "{name} {}: {r}", j.name);
            }
        }
    }
}

#[test]
fn arm_matches_finite_differences_on_coarse_grid() {
    let arm = shipped("two_link_arm");
    let lm = assemble(&arm, AssemblyOptions::reduced()).unwrap();
    assert_eq!(lm.n_states(), 4);
    for a1 in [45.0, 67.5, 90.0] {
        for a2 in [45.0, 90.0, 135.0] {
            let p = arm_point(a1, a2);
            let ss = sample_model(&lm, &p, BoundsMode::Strict).unwrap();
            let ev = NonlinearEvaluator::new(&arm, &p).unwrap();
            let (a, b) = fd_linearize(&ev, &ev.trim_torques().unwrap(), FdConfig::default()).unwrap();
            assert!(rel_frobenius(&ss.a, &a) <= 1e-5);
            assert!(rel_frobenius(&ss.b, &b) <= 1e-5);
        }
    }
}

#[test]
fn balloon_matches_finite_differences_at_nominal() {
    let model = shipped("balloon_planar");
    let lm = assemble(&model, AssemblyOptions::reduced()).unwrap();
    let p = model.params.nominal_point();
    let ss = sample_model(&lm, &p, BoundsMode::Strict).unwrap();
    let ev = NonlinearEvaluator::new(&model, &p).unwrap();
    let (a, b) = fd_linearize(&ev, &ev.trim_torques().unwrap(), FdConfig::default()).unwrap();
    assert!(rel_frobenius(&ss.a, &a) <= 1e-5);
    assert!(rel_frobenius(&ss.b, &b) <= 1e-5);
}

#[test]
fn sampled_model_equals_frozen_reassembly() {
    let arm = shipped("two_link_arm");
    let lm = assemble(&arm, AssemblyOptions::reduced()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..30 {
        let p = arm.params.random_point(&mut rng);
        let ss = sample_model(&lm, &p, BoundsMode::Strict).unwrap();
        let frozen = arm.frozen(&p).unwrap();
        let direct = assemble(&frozen, AssemblyOptions::reduced()).unwrap();
        assert_eq!(direct.system.system.order(), 0);
        let d = direct.system.nominal();
        for (x, y) in [(&ss.a, &d.a), (&ss.b, &d.b), (&ss.c, &d.c), (&ss.d, &d.d)] {
            assert!(rel_frobenius(x, y) <= 1e-8);
        }
    }
}

#[test]
fn balloon_has_order_26_and_is_stable() {
    let model = shipped("balloon_planar");
    let lm = assemble(&model, AssemblyOptions::reduced()).unwrap();
    assert_eq!(lm.n_states(), 26);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut points = vec![model.params.nominal_point()];
    points.extend((0..5).map(|_| model.params.random_point(&mut rng)));
    for p in points {
        let ss = sample_model(&lm, &p, BoundsMode::Strict).unwrap();
        for m in modes(&ss.a) {
            assert!(m.re <= 1e-12, "{m:?}");
        }
    }
}

#[test]
fn parameters_are_routed_by_kind() {
    let arm = assemble(&shipped("two_link_arm"), AssemblyOptions::reduced()).unwrap();
    let blocks = arm.delta_blocks();
    assert_eq!(blocks[&ParamKind::Varying], vec!["t1", "t2"]);
    assert_eq!(blocks[&ParamKind::Uncertain], vec!["J1", "L2", "m1", "m3", "rho1"]);
    assert!(!blocks.contains_key(&ParamKind::Design));
    let balloon = assemble(&shipped("balloon_planar"), AssemblyOptions::reduced()).unwrap();
    let blocks = balloon.delta_blocks();
    assert_eq!(blocks[&ParamKind::Design], vec!["l6"]);
    assert_eq!(
        blocks[&ParamKind::Uncertain],
        vec!["J0", "J10", "J12", "m0", "m11", "rho0"]
    );
}

#[test]
fn reduction_preserves_evaluation() {
    let arm = shipped("two_link_arm");
    let full = assemble(&arm, AssemblyOptions::unreduced()).unwrap();
    let red = assemble(&arm, AssemblyOptions::reduced()).unwrap();
    for (name, n) in red.occurrences() {
        assert!(n <= full.occurrences()[&name]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let p = arm.params.random_point(&mut rng);
        let x = sample_model(&full, &p, BoundsMode::Strict).unwrap();
        let y = sample_model(&red, &p, BoundsMode::Strict).unwrap();
        assert!(rel_frobenius(&x.a, &y.a) <= 1e-8);
        assert!(rel_frobenius(&x.b, &y.b) <= 1e-8);
    }
}

#[test]
fn state_order_is_rates_then_positions() {
    let balloon = assemble(&shipped("balloon_planar"), AssemblyOptions::reduced()).unwrap();
    let n = balloon.states.len();
    assert_eq!(n, 26);
    for k in 0..n / 2 {
        assert_ne!(balloon.states[k], balloon.states[k + n / 2]);
    }
    let p = shipped("balloon_planar").params.nominal_point();
    let ss = sample_model(&balloon, &p, BoundsMode::Strict).unwrap();
    // position rows integrate the rates
    for i in 0..n / 2 {
        for j in 0..n / 2 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((ss.a[(n / 2 + i, j)] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn modes_of_simple_systems() {
    let di = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let md = modes(&di);
    assert_eq!(md.len(), 2);
    assert!(md.iter().all(|m| m.re == 0.0 && m.im == 0.0 && m.damping == 1.0));
    let (w, z) = (3.0, 0.2);
    let osc = Mat::from_row_slice(2, 2, &[0.0, 1.0, -w * w, -2.0 * z * w]);
    let md = modes(&osc);
    for m in &md {
        assert!((m.damping - z).abs() < 1e-12);
        assert!((m.freq_hz - w / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
    }
    assert!(md[0].im.abs() <= md[1].im.abs());
}

#[test]
fn export_round_trip_evaluates_identically() {
    let arm = shipped("two_link_arm");
    let lm = assemble(&arm, AssemblyOptions::reduced()).unwrap();
    let back = LinearLftModel::from_json(&lm.to_json().unwrap()).unwrap();
    assert_eq!(back.occurrences(), lm.occurrences());
    assert_eq!(back.states, lm.states);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let p = arm.params.random_point(&mut rng);
        let x = sample_model(&lm, &p, BoundsMode::Strict).unwrap();
        let y = sample_model(&back, &p, BoundsMode::Strict).unwrap();
        assert!(rel_frobenius(&x.a, &y.a) <= 1e-13);
    }
}

#[test]
fn unbalanced_free_root_is_rejected() {
    let model = edited(
        "balloon_planar",
        "balance = true",
        "force = { value = [0.0, 1000.0, 0.0], unit = \"N\" }",
    );
    let err = assemble(&model, AssemblyOptions::reduced()).unwrap_err();
    assert!(matches!(err, Error::Trim { .. }), "{err}");
}

#[test]
fn sampling_requires_every_parameter() {
    let lm = assemble(&shipped("pendulum"), AssemblyOptions::reduced()).unwrap();
    let err = sample_model(&lm, &Point::new(), BoundsMode::Warn).unwrap_err();
    assert!(matches!(err, Error::MissingParam(_)));
    let p = Point::from([("L".to_string(), 2.0)]);
    assert!(matches!(
        sample_model(&lm, &p, BoundsMode::Strict).unwrap_err(),
        Error::OutOfBounds { .. }
    ));
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn pendulum_frequency_tracks_length(l in 0.8f64..=1.2) {
            let lm = assemble(&shipped("pendulum"), AssemblyOptions::reduced()).unwrap();
            let ss = sample_model(&lm, &Point::from([("L".to_string(), l)]), BoundsMode::Strict).unwrap();
            let w = (G / l).sqrt();
            for (re, im) in sorted_eigs(&ss.a) {
                prop_assert!(re.abs() <= 1e-9 * w);
                prop_assert!((im.abs() - w).abs() <= 1e-9 * w);
            }
        }

        #[test]
        fn arm_sample_equals_frozen(th1 in 45.0f64..=90.0, th2 in 45.0f64..=135.0, m3 in 0.0f64..1.0) {
            let arm = shipped("two_link_arm");
            let lm = assemble(&arm, AssemblyOptions::reduced()).unwrap();
            let mut p = arm_point(th1, th2);
            let m3_param = arm.params.get("m3").unwrap();
            p.insert("m3".into(), m3_param.lower + m3 * (m3_param.upper - m3_param.lower));
            let ss = sample_model(&lm, &p, BoundsMode::Strict).unwrap();
            let d = assemble(&arm.frozen(&p).unwrap(), AssemblyOptions::reduced()).unwrap().system.nominal();
            prop_assert!(rel_frobenius(&ss.a, &d.a) <= 1e-8);
            prop_assert!(rel_frobenius(&ss.b, &d.b) <= 1e-8);
            let eq = equilibrium(&arm, &p);
            prop_assert_eq!(eq.root_residual, [0.0; 6]);
        }
    }
}
