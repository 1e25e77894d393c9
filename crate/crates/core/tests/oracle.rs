mod common;

use common::{shipped, G};
use lft_multibody::assembly::{assemble, sample_model, step1_geometry, step2_wrenches, AssemblyOptions};
use lft_multibody::lft::{BoundsMode, Point};
use lft_multibody::oracle::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn equilibrium_is_a_rest_point() {
    for name in ["pendulum", "two_link_arm", "balloon_planar"] {
        let model = shipped(name);
        let sol = step2_wrenches(&model, step1_geometry(&model).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let nominal = model.params.nominal_point();
        let ev = NonlinearEvaluator::new(&model, &nominal).unwrap();
        assert!(ev.trim_residual(&sol.torques_at(&nominal).unwrap()).unwrap() <= 1e-9);
        for _ in 0..20 {
            let p = model.params.random_point(&mut rng);
            let ev = NonlinearEvaluator::new(&model, &p).unwrap();
            let r = ev.trim_residual(&sol.torques_at(&p).unwrap()).unwrap();
            assert!(r <= 1e-8, "{name}: {r}");
        }
    }
}

#[test]
fn pendulum_small_angle_dynamics() {
    let model = shipped("pendulum");
    let l = 1.1;
    let p = Point::from([("L".to_string(), l)]);
    let ev = NonlinearEvaluator::new(&model, &p).unwrap();
    let mut s = ev.trim.clone();
    s.q[0] = 0.3;
    let (_, qdd) = ev.nonlinear_accel(&s, &[0.0], &[0.0]).unwrap();
    let inertia = 2.0 * l * l + 1e-10;
    let want = -2.0 * G * l * 0.3f64.sin() / inertia;
    assert!((qdd[0] - want).abs() < 1e-12 * want.abs());
    let (a, _) = fd_linearize(&ev, &[0.0], FdConfig::default()).unwrap();
    assert!((a[(0, 1)] + 2.0 * G * l / inertia).abs() <= 1e-7 * G / l);
    assert!((a[(1, 0)] - 1.0).abs() < 1e-9);
}

#[test]
fn energy_rate_equals_actuator_power_without_friction() {
    let model = shipped("two_link_arm");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let p = model.params.random_point(&mut rng);
        let ev = NonlinearEvaluator::new(&model, &p).unwrap();
        let mut s = ev.trim.clone();
        for j in 0..2 {
            s.q[j] += rng.gen_range(-0.3..0.3);
            s.qd[j] = rng.gen_range(-1.0..1.0);
        }
        let tau = [rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)];
        let rate = energy_rate_fd(&ev, &s, &tau, &[0.0, 0.0], 1e-5).unwrap();
        let power: f64 = tau.iter().zip(&s.qd).map(|(t, w)| t * w).sum();
        assert!((rate - power).abs() <= 1e-8 * (1.0 + power.abs()), "{rate} vs {power}");
    }
}

#[test]
fn energy_decays_through_friction_and_damping() {
    let model = shipped("balloon_planar");
    let ev = NonlinearEvaluator::new(&model, &model.params.nominal_point()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let tq = ev.trim_torques().unwrap();
    let mut s = ev.trim.clone();
    for j in 0..s.q.len() {
        s.q[j] += rng.gen_range(-0.05..0.05);
        s.qd[j] = rng.gen_range(-0.1..0.1);
    }
    s.root_vel[1] = 0.2;
    s.root_vel[3] = 0.01;
    // the potential energy is ~1e7 J, so extrapolate from larger steps
    let fd = |h: f64| energy_rate_fd(&ev, &s, &tq, &[0.0, 0.0], h).unwrap();
    let rate = (4.0 * fd(5e-4) - fd(1e-3)) / 3.0;
    let friction: f64 = s.qd.iter().map(|w| 50.0 * w * w).sum();
    let damping = 1e4 * s.root_vel[3] * s.root_vel[3];
    let actuators: f64 = tq.iter().zip(&s.qd).map(|(t, w)| t * w).sum();
    let want = actuators - friction - damping;
    assert!((rate - want).abs() <= 1e-6 * (friction + damping), "{rate} vs {want}");
}

#[test]
fn pendulum_fd_matches_closed_form() {
    let model = shipped("pendulum");
    let ev = NonlinearEvaluator::new(&model, &model.params.nominal_point()).unwrap();
    let (a, b) = fd_linearize(&ev, &[0.0], FdConfig::default()).unwrap();
    let inertia = 2.0 + 1e-10;
    assert!((a[(0, 1)] + 2.0 * G / inertia).abs() <= 1e-7 * G);
    assert!((b[(0, 0)] - 1.0 / inertia).abs() <= 1e-7);
}

#[test]
fn central_difference_error_is_second_order() {
    let model = shipped("two_link_arm");
    let lm = assemble(&model, AssemblyOptions::reduced()).unwrap();
    let mut p = model.params.nominal_point();
    p.insert("t1".into(), (60f64.to_radians() / 2.0).tan());
    p.insert("t2".into(), (70f64.to_radians() / 2.0).tan());
    let exact = sample_model(&lm, &p, BoundsMode::Strict).unwrap().a;
    let ev = NonlinearEvaluator::new(&model, &p).unwrap();
    let tq = ev.trim_torques().unwrap();
    let err = |h: f64| {
        let (a, _) = fd_linearize(&ev, &tq, FdConfig { step: h }).unwrap();
        (a - &exact).norm()
    };
    let ratio = err(2e-2) / err(1e-2);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn fd_refuses_off_trim_torques() {
    let model = shipped("two_link_arm");
    let ev = NonlinearEvaluator::new(&model, &model.params.nominal_point()).unwrap();
    let mut tq = ev.trim_torques().unwrap();
    tq[0] += 1.0;
    assert!(matches!(
        fd_linearize(&ev, &tq, FdConfig::default()),
        Err(lft_multibody::Error::Trim { .. })
    ));
    assert!(fd_linearize(&ev, &tq, FdConfig { step: 0.0 }).is_err());
}
