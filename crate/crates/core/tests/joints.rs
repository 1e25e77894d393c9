use lft_multibody::joints::*;
use lft_multibody::lft::{AngleVariant, HalfTanParam, Mat, ParamKind, Point};
use lft_multibody::spatial::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_v3(rng: &mut ChaCha8Rng, s: f64) -> V3 {
    V3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s))
}

fn rand_euler(rng: &mut ChaCha8Rng) -> EulerState {
    EulerState::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

fn rand_axis(rng: &mut ChaCha8Rng) -> V3 {
    rand_v3(rng, 1.0).normalize()
}

fn rand_rot(rng: &mut ChaCha8Rng) -> M3 {
    let e = rand_euler(rng);
    euler_matrix(&e.angles)
}

fn joint(rng: &mut ChaCha8Rng) -> RevoluteJoint {
    RevoluteJoint::new(
        "j",
        Endpoint::port("B", "p"),
        Endpoint::port("A", "q"),
        rand_axis(rng),
        JointAngle::Fixed(0.3),
    )
    .with_zero_dcm(rand_rot(rng))
    .with_shaft_inertia(0.7)
    .with_friction(0.2)
}

#[test]
fn rigid_angle_derivative_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let conn = RigidConnection {
            name: "c".into(),
            parent: Endpoint::Ground,
            child: Endpoint::port("A", "p"),
            dcm: rand_rot(&mut rng),
        };
        let tb = rand_euler(&mut rng);
        let ta = rigid_connection_equilibrium(&conn, &tb).unwrap();
        if ta.angles.y.cos().abs() < 0.2 {
            continue;
        }
        let d = rigid_angle_derivative(&conn.dcm, &tb).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut p = tb.angles;
            let mut m = tb.angles;
            p[k] += h;
            m[k] -= h;
            let fp = rigid_connection_equilibrium(&conn, &EulerState::from_vec(p)).unwrap().angles;
            let fm = rigid_connection_equilibrium(&conn, &EulerState::from_vec(m)).unwrap().angles;
            let col = (fp - fm) / (2.0 * h);
            assert!((col - d.column(k)).abs().max() < 1e-7, "{col} vs {}", d.column(k));
        }
    }
}

#[test]
fn rigid_block_preserves_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let conn = RigidConnection {
            name: "c".into(),
            parent: Endpoint::Ground,
            child: Endpoint::port("A", "p"),
            dcm: rand_rot(&mut rng),
        };
        let blk = rigid_connection_block(&conn, &EulerState::zero()).unwrap();
        let vb = Mat::from_fn(18, 1, |_, _| rng.gen_range(-1.0..1.0));
        let wa = Mat::from_fn(6, 1, |_, _| rng.gen_range(-1.0..1.0));
        let va = &blk.motion * &vb;
        let wb = &blk.wrench * &wa;
        let pa = (wa.transpose() * va.rows(6, 6))[(0, 0)];
        let pb = (wb.transpose() * vb.rows(6, 6))[(0, 0)];
        assert!((pa - pb).abs() < 1e-12);
    }
}

#[test]
fn axis_is_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let j = joint(&mut rng);
    let ra = j.axis_child();
    for _ in 0..10 {
        let th = rng.gen_range(-3.0..3.0);
        let rb = j.dcm(th) * ra;
        assert!((rb - j.axis).abs().max() < 1e-14);
        assert!((j.dcm(th).transpose() * j.axis - ra).abs().max() < 1e-14);
    }
}

#[test]
fn equilibrium_torque_balances_wrench() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let j = joint(&mut rng);
    let w = V6::from_fn(|_, _| rng.gen_range(-5.0..5.0));
    let eq = revolute_equilibrium(&j, &EulerState::zero(), 0.3, &w).unwrap();
    let ra = j.axis_child();
    let r6 = V6::new(0.0, 0.0, 0.0, ra.x, ra.y, ra.z);
    assert!((eq.cm + r6.dot(&w)).abs() < 1e-12);
    assert!((eq.w_jb - double(&j.dcm(0.3)) * w).abs().max() < 1e-12);
}

#[test]
fn hanging_pendulum_needs_no_torque() {
    // point mass m below the joint, axis x
    let m = 2.0;
    let g = 9.81;
    let d = V3::new(0.0, 0.0, -1.5);
    let j = RevoluteJoint::new("j", Endpoint::Ground, Endpoint::port("A", "q"), V3::x(), JointAngle::Fixed(0.0));
    // weight applied at the mass, transported to the joint: moment d x F
    let f = V3::new(0.0, 0.0, -m * g);
    let mo = d.cross(&f);
    let w = V6::new(f.x, f.y, f.z, mo.x, mo.y, mo.z);
    let eq = revolute_equilibrium(&j, &EulerState::zero(), 0.0, &w).unwrap();
    assert!(eq.cm.abs() < 1e-12);
    // tilted by 30 degrees the torque holds the mass
    let th = 30f64.to_radians();
    let dr = V3::new(0.0, 1.5 * th.sin(), -1.5 * th.cos());
    let mo = dr.cross(&f);
    let w = V6::new(f.x, f.y, f.z, mo.x, mo.y, mo.z);
    let eq = revolute_equilibrium(&j, &EulerState::zero(), th, &(double(&j.dcm(th).transpose()) * w)).unwrap();
    assert!((eq.cm - m * g * 1.5 * th.sin()).abs() < 1e-10, "{}", eq.cm);
}

fn pose_with(x: V3, e: V3) -> V6 {
    V6::new(x.x, x.y, x.z, e.x, e.y, e.z)
}

#[test]
fn block_matches_nonlinear_transform() {
    use revolute_io::*;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let j = joint(&mut rng);
        let th = rng.gen_range(-1.0..1.0);
        let tb = rand_euler(&mut rng);
        let xp = rand_v3(&mut rng, 2.0);
        let w = V6::from_fn(|_, _| rng.gen_range(-5.0..5.0));
        let ta = revolute_equilibrium(&j, &tb, th, &w).unwrap().theta_a;
        if ta.angles.y.cos().abs() < 0.2 {
            continue;
        }
        let ss = revolute_block(&j, &tb, th, &w, &xp).unwrap();
        let mb0 = MotionVector::new(V6::zeros(), V6::zeros(), pose_with(xp, tb.angles));
        let f = |dm: &V18, dth: f64, dthd: f64, dthdd: f64| -> V18 {
            let m = MotionVector::from_vec18(&(mb0.as_vec18() + dm));
            revolute_motion_transform_nonlinear(&j, &m, th + dth, dthd, dthdd).unwrap().as_vec18()
        };
        let h = 1e-6;
        // motion inputs with theta frozen
        for k in 0..18 {
            let mut e = V18::zeros();
            e[k] = h;
            let col = (f(&e, 0.0, 0.0, 0.0) - f(&-e, 0.0, 0.0, 0.0)) / (2.0 * h);
            let mut blk = ss.d.view((OUT_MA, IN_MB + k), (18, 1)).clone_owned();
            // remove the theta'' path, which the transform takes as an input
            blk -= ss.d.view((OUT_MA, IN_CM), (18, 1)) * (ss.d[(OUT_THDD, IN_MB + k)] / ss.d[(OUT_THDD, IN_CM)]);
            for r in 0..18 {
                assert!((col[r] - blk[(r, 0)]).abs() < 1e-6, "row {r} col {k}: {} vs {}", col[r], blk[(r, 0)]);
            }
        }
        // theta direction
        let z = V18::zeros();
        let col = (f(&z, h, 0.0, 0.0) - f(&z, -h, 0.0, 0.0)) / (2.0 * h);
        for r in 0..18 {
            assert!((col[r] - ss.c[(OUT_MA + r, 1)]).abs() < 1e-6, "theta row {r}");
        }
        // theta' direction (velocity rows only: the acceleration rows see the friction path)
        let col = (f(&z, 0.0, h, 0.0) - f(&z, 0.0, -h, 0.0)) / (2.0 * h);
        for r in 6..18 {
            assert!((col[r] - ss.c[(OUT_MA + r, 0)]).abs() < 1e-6);
        }
        // theta'' direction via the torque input
        let col = (f(&z, 0.0, 0.0, h) - f(&z, 0.0, 0.0, -h)) / (2.0 * h);
        let s = 1.0 / ss.d[(OUT_THDD, IN_CM)];
        for r in 0..18 {
            assert!((col[r] - ss.d[(OUT_MA + r, IN_CM)] * s).abs() < 1e-6);
        }
        // wrench stiffness
        let wf = |t: f64| double(&j.dcm(t)) * w;
        let col = (wf(th + h) - wf(th - h)) / (2.0 * h);
        for r in 0..6 {
            assert!((col[r] - ss.c[(OUT_W + r, 1)]).abs() < 1e-6);
        }
    }
}

#[test]
fn frozen_joint_matches_rigid_connection() {
    use revolute_io::*;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let j = joint(&mut rng);
    let th = 0.4;
    let tb = EulerState::new(0.1, -0.2, 0.3);
    let w = V6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let ss = revolute_block(&j, &tb, th, &w, &V3::zeros()).unwrap();
    let rigid = RigidConnection {
        name: "c".into(),
        parent: j.parent.clone(),
        child: j.child.clone(),
        dcm: j.dcm(th),
    };
    let blk = rigid_connection_block(&rigid, &tb).unwrap();
    let mut dm = ss.d.view((OUT_MA, IN_MB), (18, 18)).clone_owned();
    // strip the theta'' path
    let p = ss.d.view((OUT_MA, IN_CM), (18, 1)) * (ss.d.view((OUT_THDD, IN_MB), (1, 18)) / ss.d[(OUT_THDD, IN_CM)]);
    dm -= p;
    assert!((dm - &blk.motion).abs().max() < 1e-12);
    assert!((ss.d.view((OUT_W, IN_W), (6, 6)) - &blk.wrench).abs().max() < 1e-12);
}

#[test]
fn joint_dynamics_row() {
    use revolute_io::*;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let j = joint(&mut rng);
    let ss = revolute_block(&j, &EulerState::zero(), 0.0, &V6::zeros(), &V3::zeros()).unwrap();
    assert!((ss.a[(0, 0)] + 0.2 / 0.7).abs() < 1e-14);
    assert_eq!(ss.a[(1, 0)], 1.0);
    assert!((ss.b[(0, IN_CM)] - 1.0 / 0.7).abs() < 1e-14);
    let ra = j.axis_child();
    for k in 0..3 {
        assert!((ss.b[(0, IN_W + 3 + k)] - ra[k] / 0.7).abs() < 1e-14);
        assert!((ss.b[(0, IN_MB + 3 + k)] + j.axis[k]).abs() < 1e-14);
        assert_eq!(ss.b[(0, IN_W + k)], 0.0);
    }
}

#[test]
fn invalid_joints_are_rejected() {
    let j = RevoluteJoint::new("j", Endpoint::Ground, Endpoint::port("A", "q"), V3::x(), JointAngle::Fixed(0.0));
    assert!(j.clone().with_shaft_inertia(0.0).validate().is_err());
    assert!(j.clone().with_friction(-1.0).validate().is_err());
    let mut bad = j.clone();
    bad.axis = V3::new(1.0, 1.0, 0.0);
    assert!(bad.validate().is_err());
    assert!(revolute_block(&j.with_shaft_inertia(-1.0), &EulerState::zero(), 0.0, &V6::zeros(), &V3::zeros()).is_err());
}

#[test]
fn parametric_angle() {
    let h = HalfTanParam::from_angle_range("t", "theta", ParamKind::Varying, 0.5, 0.2, 1.0, AngleVariant::Half).unwrap();
    let j = RevoluteJoint::new("j", Endpoint::Ground, Endpoint::port("A", "q"), V3::z(), JointAngle::Param(h.clone()))
        .with_zero_dcm(rot_x(0.3));
    let lft = j.dcm_lft().unwrap();
    for th in [0.2, 0.5, 0.77, 1.0] {
        let mut pt = Point::new();
        pt.insert("t".into(), h.tangent_of(th));
        let m = lft.evaluate(&pt).unwrap();
        assert!((m - to_dyn(&j.dcm(th))).abs().max() < 1e-12);
        assert!((j.angle_at(&pt).unwrap() - th).abs() < 1e-14);
    }
    assert!(j.angle_at(&Point::new()).is_err());
}
