//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest harness.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::{edited, shipped, G};
use lft_multibody::assembly::*;
use lft_multibody::cli::{cmd_sample, grid_points, parse_grid, POLES_HEADER};
use lft_multibody::joints::Connection;
use lft_multibody::lft::*;
use lft_multibody::oracle::{fd_linearize, rel_frobenius, FdConfig, NonlinearEvaluator};
use lft_multibody::spatial::V3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_abs(m: &Mat) -> f64 {
    m.amax()
}

fn rot(th: f64) -> Mat {
    Mat::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()])
}

fn arm_point(params: &ParamSet, th1_deg: f64, th2_deg: f64) -> Point {
    let mut p = params.nominal_point();
    p.insert("t1".into(), (th1_deg.to_radians() / 2.0).tan());
    p.insert("t2".into(), (th2_deg.to_radians() / 2.0).tan());
    p
}

fn sorted_eigs(a: &Mat) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = a.complex_eigenvalues().iter().map(|l| (l.re, l.im)).collect();
    v.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.total_cmp(&y.0)));
    v
}

fn criterion_1() -> Result<String, Box<dyn std::error::Error>> {
    let start = Instant::now();
    let arm = shipped("two_link_arm");
    let lm = assemble(&arm, AssemblyOptions::default())?;
    let (mut worst_a, mut worst_b) = (0.0f64, 0.0f64);
    for i in 0..5 {
        for j in 0..5 {
            let th1 = 45.0 + 45.0 * i as f64 / 4.0;
            let th2 = 45.0 + 90.0 * j as f64 / 4.0;
            let p = arm_point(&lm.params, th1, th2);
            let ss = sample_model(&lm, &p, BoundsMode::Strict)?;
            let ev = NonlinearEvaluator::new(&arm, &p)?;
            let (a, b) = fd_linearize(&ev, &ev.trim_torques()?, FdConfig::default())?;
            worst_a = worst_a.max(rel_frobenius(&ss.a, &a));
            worst_b = worst_b.max(rel_frobenius(&ss.b, &b));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("5x5 grid: max rel A {worst_a:.2e}, B {worst_b:.2e} (tol 1e-5), {secs:.2} s (limit 10 s)");
    Ok(check(worst_a <= 1e-5 && worst_b <= 1e-5 && secs <= 10.0, detail)?)
}

fn criterion_2() -> Result<String, Box<dyn std::error::Error>> {
    let arm = shipped("two_link_arm");
    let lm = assemble(&arm, AssemblyOptions::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = arm.params.random_point(&mut rng);
        let ss = sample_model(&lm, &p, BoundsMode::Strict)?;
        let frozen = assemble(&arm.frozen(&p)?, AssemblyOptions::default())?;
        let d = frozen.system.nominal();
        for (x, y) in [(&ss.a, &d.a), (&ss.b, &d.b), (&ss.c, &d.c), (&ss.d, &d.d)] {
            worst = worst.max(rel_frobenius(x, y));
        }
    }
    Ok(check(worst <= 1e-8, format!("100 random points vs frozen re-assembly: max rel {worst:.2e} (tol 1e-8)"))?)
}

fn criterion_3() -> Result<String, Box<dyn std::error::Error>> {
    let model = shipped("pendulum");
    let lm = assemble(&model, AssemblyOptions::default())?;
    let mut worst = 0.0f64;
    for l in [0.8, 0.9, 1.0, 1.1, 1.2] {
        let ss = sample_model(&lm, &Point::from([("L".to_string(), l)]), BoundsMode::Strict)?;
        let w = (G / l).sqrt();
        for (re, im) in sorted_eigs(&ss.a) {
            worst = worst.max(re.abs() / w).max((im.abs() - w).abs() / w);
        }
    }
    let k_j = 0.7;
    let damped = edited(
        "pendulum",
        "angle = { value = 0.0, unit = \"deg\" }",
        &format!("angle = {{ value = 0.0, unit = \"deg\" }}\nfriction = {{ value = {k_j}, unit = \"N*m*s/rad\" }}"),
    );
    let lm = assemble(&damped, AssemblyOptions::default())?;
    let (m, l) = (2.0, 1.1);
    let ss = sample_model(&lm, &Point::from([("L".to_string(), l)]), BoundsMode::Strict)?;
    let inertia = m * l * l + 1e-10;
    let re = -k_j / (2.0 * inertia);
    let im = (4.0 * inertia * m * G * l - k_j * k_j).sqrt() / (2.0 * inertia);
    let got = sorted_eigs(&ss.a);
    let worst_damped = [(re, -im), (re, im)]
        .iter()
        .zip(&got)
        .map(|(w, g)| ((w.0 - g.0).abs() + (w.1 - g.1).abs()) / im)
        .fold(0.0f64, f64::max);
    Ok(check(
        worst <= 1e-9 && worst_damped <= 1e-9,
        format!("undamped poles vs +-i sqrt(g/L): {worst:.2e}; damped: {worst_damped:.2e} (tol 1e-9)"),
    )?)
}

fn criterion_4() -> Result<String, Box<dyn std::error::Error>> {
    let half = HalfTanParam::from_angle_range("t", "theta", ParamKind::Varying, 0.0, -2.7, 2.7, AngleVariant::Half)?;
    let r = rotation_lft_half(&half)?;
    let mut worst_half = 0.0f64;
    for i in 0..50 {
        let th = -2.7 + 5.4 * i as f64 / 49.0;
        let v = r.evaluate(&Point::from([("t".to_string(), half.tangent_of(th))]))?;
        worst_half = worst_half.max(max_abs(&(v - rot(th))));
    }
    let quarter =
        HalfTanParam::from_angle_range("tq", "theta", ParamKind::Varying, 0.0, -PI, PI, AngleVariant::Quarter)?;
    let rq = rotation_lft_quarter(&quarter)?;
    let mut worst_quarter = 0.0f64;
    let mut inside = true;
    for i in 1..200 {
        let th = -PI + 2.0 * PI * i as f64 / 200.0;
        let tq = quarter.tangent_of(th);
        inside &= tq.abs() < 1.0;
        let v = rq.evaluate(&Point::from([("tq".to_string(), tq)]))?;
        worst_quarter = worst_quarter.max(max_abs(&(v - rot(th))));
    }
    let (nh, nq) = (r.occurrences_of("t"), rq.occurrences_of("tq"));
    Ok(check(
        nh == 2 && nq == 4 && worst_half <= 1e-12 && worst_quarter <= 1e-12 && inside,
        format!(
            "half: {nh} occurrences, err {worst_half:.1e}; quarter: {nq} occurrences, err {worst_quarter:.1e}, |t'| < 1 on (-pi, pi): {inside}"
        ),
    )?)
}

fn criterion_5() -> Result<String, Box<dyn std::error::Error>> {
    let (mut nominal, mut random, mut identity) = (0.0f64, 0.0f64, 0.0f64);
    for name in ["pendulum", "two_link_arm", "balloon_planar"] {
        let model = shipped(name);
        let sol = step2_wrenches(&model, step1_geometry(&model)?)?;
        let p0 = model.params.nominal_point();
        nominal = nominal.max(NonlinearEvaluator::new(&model, &p0)?.trim_residual(&sol.torques_at(&p0)?)?);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = model.params.random_point(&mut rng);
            random = random.max(NonlinearEvaluator::new(&model, &p)?.trim_residual(&sol.torques_at(&p)?)?);
            for j in &equilibrium_report(&model, &sol, &p)?.joints {
                let Connection::Revolute(joint) = &model.connections[model.connection_index(&j.name)?] else {
                    continue;
                };
                let w = &j.wrench_child_on_joint;
                let r = j.torque + joint.axis_child().dot(&V3::new(w[3], w[4], w[5]));
                let scale = 1.0 + w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                identity = identity.max(r.abs() / scale);
            }
        }
    }
    Ok(check(
        nominal <= 1e-9 && random <= 1e-8 && identity <= 1e-10,
        format!(
            "trim residual nominal {nominal:.1e} (tol 1e-9), 20 random {random:.1e} (tol 1e-8); revolute identity {identity:.1e} (tol 1e-10)"
        ),
    )?)
}

fn criterion_6() -> Result<String, Box<dyn std::error::Error>> {
    let start = Instant::now();
    let model = shipped("balloon_planar");
    let lm = assemble(&model, AssemblyOptions::default())?;
    let n = lm.n_states();
    let nominal = sample_model(&lm, &model.params.nominal_point(), BoundsMode::Strict)?;
    let mut max_re = modes(&nominal.a).iter().fold(f64::NEG_INFINITY, |m, md| m.max(md.re));
    let axes = vec![parse_grid("l6=10:60:20", &lm.params)?];
    let points = grid_points(&axes);
    let dir = tempfile::tempdir()?;
    cmd_sample(&lm, &points, dir.path(), BoundsMode::Strict)?;
    let read_poles = |i: usize| -> Result<Vec<f64>, Box<dyn std::error::Error>> {
        let csv = std::fs::read_to_string(dir.path().join(format!("poles_{i:04}.csv")))?;
        let mut lines = csv.lines();
        if lines.next() != Some(POLES_HEADER) {
            return Err("poles file header".into());
        }
        let mut mags = Vec::new();
        for line in lines {
            let cols: Vec<f64> = line.split(',').map(str::parse).collect::<Result<_, _>>()?;
            mags.push(cols[2]);
        }
        Ok(mags)
    };
    let mut rows_ok = true;
    for i in 0..points.len() {
        let poles = read_poles(i)?;
        rows_ok &= poles.len() == n;
        let ss = sample_model(&lm, &lm.params.complete(&points[i]), BoundsMode::Strict)?;
        max_re = modes(&ss.a).iter().fold(max_re, |m, md| m.max(md.re));
    }
    let first = read_poles(0)?;
    let last = read_poles(points.len() - 1)?;
    let migration = first.iter().zip(&last).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
    let secs = start.elapsed().as_secs_f64();
    Ok(check(
        n == 26 && max_re <= 1e-12 && rows_ok && points.len() == 20 && migration > 0.0 && secs <= 60.0,
        format!(
            "{n} states, max Re {max_re:.1e} (tol 1e-12), {} sweep files, largest pole frequency shift {migration:.3} Hz, {secs:.2} s (limit 60 s)",
            points.len()
        ),
    )?)
}

const TABLE_II: [(&str, usize); 7] = [("J1", 1), ("L2", 3), ("m1", 3), ("m3", 4), ("rho1", 2), ("t1", 4), ("t2", 10)];

fn criterion_7() -> Result<String, Box<dyn std::error::Error>> {
    let arm = shipped("two_link_arm");
    let full = assemble(&arm, AssemblyOptions::unreduced())?;
    let red = assemble(&arm, AssemblyOptions::default())?;
    let again = full.system.reduce();
    let (n_full, n_red, n_again) = (full.occurrences(), red.occurrences(), again.system.occurrences());
    let monotone = n_full
        .iter()
        .all(|(k, v)| n_red.get(k).copied().unwrap_or(0) <= *v && n_again.get(k).copied().unwrap_or(0) <= *v);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = arm.params.random_point(&mut rng);
        let x = sample_model(&full, &p, BoundsMode::Strict)?;
        let y = sample_model(&red, &p, BoundsMode::Strict)?;
        for (u, v) in [(&y.a, &x.a), (&y.b, &x.b), (&y.c, &x.c), (&y.d, &x.d)] {
            worst = worst.max(rel_frobenius(u, v));
        }
    }
    println!("        param  before  after  reference");
    for (name, reference) in TABLE_II {
        println!(
            "        {name:<5}  {:>6}  {:>5}  {reference:>9}",
            n_full.get(name).copied().unwrap_or(0),
            n_red.get(name).copied().unwrap_or(0)
        );
    }
    Ok(check(
        monotone && worst <= 1e-8,
        format!("no occurrence count grows: {monotone}; 100-point equivalence {worst:.1e} (tol 1e-8); reference column is informational"),
    )?)
}

fn main() {
    let criteria: [(&str, fn() -> Result<String, Box<dyn std::error::Error>>); 7] = [
        ("arm linearization vs finite differences", criterion_1),
        ("parametric sample vs frozen re-assembly", criterion_2),
        ("pendulum closed form", criterion_3),
        ("rotation LFT occurrences and accuracy", criterion_4),
        ("equilibrium residuals", criterion_5),
        ("balloon order, stability and l6 sweep", criterion_6),
        ("occurrence reduction", criterion_7),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {}: {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}: {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
