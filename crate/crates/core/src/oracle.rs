//! Nonlinear equations of motion of the tree and finite-difference
//! linearization, used as ground truth for the assembled linear model.
//!
//! Recursive Newton-Euler in the inertial frame. The root velocity is the
//! body-frame `[v; w]` at the root reference point; the root pose is the
//! inertial position of that point and its Euler angles.

use crate::assembly::{InputKind, MultibodyModel, Root, Tree};
use crate::error::{Error, Result};
use crate::joints::Connection;
use crate::lft::{Mat, Point};
use crate::spatial::{euler_matrix, euler_rate_map, EulerState, M3, V3};

/// Trim residual accepted by [`fd_linearize`].
pub const TRIM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleState {
    /// Root reference point position (inertial) and Euler angles.
    pub root_pose: [f64; 6],
    /// Root `[v; w]`, body frame; removed DOF are ignored.
    pub root_vel: [f64; 6],
    /// Joint angles, tree order.
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
}

impl OracleState {
    fn axpy(&self, h: f64, d: &OracleState) -> OracleState {
        OracleState {
            root_pose: std::array::from_fn(|k| self.root_pose[k] + h * d.root_pose[k]),
            root_vel: std::array::from_fn(|k| self.root_vel[k] + h * d.root_vel[k]),
            q: self.q.iter().zip(&d.q).map(|(a, b)| a + h * b).collect(),
            qd: self.qd.iter().zip(&d.qd).map(|(a, b)| a + h * b).collect(),
        }
    }
}

#[derive(Clone, Debug)]
struct BodyData {
    mass: f64,
    /// Inertia at the CoG, body frame, shaft inertia included.
    inertia: M3,
    cog: V3,
}

#[derive(Clone, Debug)]
struct ConnData {
    parent_port: V3,
    child_port: V3,
    axis: V3,
    friction: f64,
}

#[derive(Clone, Debug)]
struct ForceData {
    body: usize,
    port: V3,
    force: V3,
}

/// Nonlinear model frozen at a parameter point.
#[derive(Clone, Debug)]
pub struct NonlinearEvaluator<'a> {
    model: &'a MultibodyModel,
    tree: Tree,
    bodies: Vec<BodyData>,
    conns: Vec<ConnData>,
    forces: Vec<ForceData>,
    accel: V3,
    root_port: V3,
    mask: [bool; 6],
    damping: [f64; 6],
    point: Point,
    /// Equilibrium joint angles and root pose.
    pub trim: OracleState,
}

struct Kinematics {
    rot: Vec<M3>,
    /// CoG position, velocity and acceleration.
    o: Vec<V3>,
    v: Vec<V3>,
    a: Vec<V3>,
    w: Vec<V3>,
    alpha: Vec<V3>,
    /// Joint points and axes per connection.
    c: Vec<V3>,
    u: Vec<V3>,
}

impl<'a> NonlinearEvaluator<'a> {
    pub fn new(model: &'a MultibodyModel, point: &Point) -> Result<Self> {
        let point = model.params.complete(point);
        let tree = model.tree()?;
        let mut bodies = Vec::new();
        for (b, body) in model.bodies.iter().enumerate() {
            let mut inertia = body.inertia_at(&point)?;
            if let Some(ci) = tree.incoming[b] {
                if let Connection::Revolute(j) = &model.connections[ci] {
                    let ra = j.axis_child();
                    inertia += ra * ra.transpose() * j.shaft_inertia;
                }
            }
            bodies.push(BodyData {
                mass: body.mass_at(&point)?,
                inertia,
                cog: body.cog_at(&point)?,
            });
        }
        let mut conns = Vec::new();
        let mut trim_q = Vec::new();
        for (ci, c) in model.connections.iter().enumerate() {
            let parent_port = match tree.conn_parent[ci] {
                Some(p) => model.bodies[p].port_at(c.parent().port_name().unwrap_or_default(), &point)?,
                None => V3::zeros(),
            };
            let child = tree.conn_child[ci];
            let child_port = model.bodies[child].port_at(c.child().port_name().unwrap_or_default(), &point)?;
            let (axis, friction) = match c {
                Connection::Revolute(j) => (j.axis, j.friction),
                Connection::Rigid(_) => (V3::zeros(), 0.0),
            };
            conns.push(ConnData {
                parent_port,
                child_port,
                axis,
                friction,
            });
        }
        for &ci in &tree.joints {
            if let Connection::Revolute(j) = &model.connections[ci] {
                trim_q.push(j.angle_at(&point)?);
            }
        }
        let total: f64 = bodies.iter().map(|b| b.mass).sum();
        let accel = model.boundary.acceleration;
        let mut forces = Vec::new();
        for f in &model.boundary.forces {
            let b = model.body_index(&f.body)?;
            let force = if f.balance {
                accel * total
            } else {
                V3::new(f.force[0].eval(&point)?, f.force[1].eval(&point)?, f.force[2].eval(&point)?)
            };
            forces.push(ForceData {
                body: b,
                port: model.bodies[b].port_at(&f.port, &point)?,
                force,
            });
        }
        let (root_port, mask, damping, euler) = match (&model.root, tree.root_body) {
            (Root::Body { port, damping, euler, .. }, Some(r)) => (
                match port {
                    Some(p) => model.bodies[r].port_at(p, &point)?,
                    None => bodies[r].cog,
                },
                model.bodies[r].dof_mask,
                *damping,
                *euler,
            ),
            _ => (V3::zeros(), [false; 6], [0.0; 6], V3::zeros()),
        };
        let nj = trim_q.len();
        let trim = OracleState {
            root_pose: [0.0, 0.0, 0.0, euler.x, euler.y, euler.z],
            root_vel: [0.0; 6],
            q: trim_q,
            qd: vec![0.0; nj],
        };
        Ok(NonlinearEvaluator {
            model,
            tree,
            bodies,
            conns,
            forces,
            accel,
            root_port,
            mask,
            damping,
            point,
            trim,
        })
    }

    pub fn n_joints(&self) -> usize {
        self.tree.joints.len()
    }

    /// Kept root DOF indices.
    pub fn kept(&self) -> Vec<usize> {
        (0..6).filter(|&k| self.mask[k]).collect()
    }

    fn joint_slot(&self, ci: usize) -> Option<usize> {
        self.tree.joints.iter().position(|&j| j == ci)
    }

    fn root_rot(&self, s: &OracleState) -> M3 {
        euler_matrix(&V3::new(s.root_pose[3], s.root_pose[4], s.root_pose[5]))
    }

    fn masked_vel(&self, s: &OracleState) -> ([f64; 6], bool) {
        let free = self.tree.root_body.is_some();
        (std::array::from_fn(|k| if self.mask[k] { s.root_vel[k] } else { 0.0 }), free)
    }

    /// Forward kinematics with generalized accelerations `root_acc` and `qdd`.
    fn kinematics(&self, s: &OracleState, root_acc: &[f64; 6], qdd: &[f64]) -> Kinematics {
        let nb = self.bodies.len();
        let nc = self.conns.len();
        let mut k = Kinematics {
            rot: vec![M3::identity(); nb],
            o: vec![V3::zeros(); nb],
            v: vec![V3::zeros(); nb],
            a: vec![V3::zeros(); nb],
            w: vec![V3::zeros(); nb],
            alpha: vec![V3::zeros(); nb],
            c: vec![V3::zeros(); nc],
            u: vec![V3::zeros(); nc],
        };
        let (nu, free) = self.masked_vel(s);
        if let (Some(r), true) = (self.tree.root_body, free) {
            let rot = self.root_rot(s);
            let p = V3::new(s.root_pose[0], s.root_pose[1], s.root_pose[2]);
            let vb = V3::new(nu[0], nu[1], nu[2]);
            let wb = V3::new(nu[3], nu[4], nu[5]);
            let acc: [f64; 6] = std::array::from_fn(|i| if self.mask[i] { root_acc[i] } else { 0.0 });
            let vdot = V3::new(acc[0], acc[1], acc[2]);
            let wdot = V3::new(acc[3], acc[4], acc[5]);
            let w = rot * wb;
            let alpha = rot * wdot;
            let a_ref = rot * (vdot + wb.cross(&vb));
            let rel = rot * (self.bodies[r].cog - self.root_port);
            k.rot[r] = rot;
            k.o[r] = p + rel;
            k.w[r] = w;
            k.alpha[r] = alpha;
            k.v[r] = rot * vb + w.cross(&rel);
            k.a[r] = a_ref + alpha.cross(&rel) + w.cross(&w.cross(&rel));
        }
        for &b in &self.tree.order {
            let Some(ci) = self.tree.incoming[b] else { continue };
            let cd = &self.conns[ci];
            let (rp, xp, wp, alp, vc, ac) = match self.tree.conn_parent[ci] {
                None => (M3::identity(), V3::zeros(), V3::zeros(), V3::zeros(), V3::zeros(), V3::zeros()),
                Some(p) => {
                    let rel = k.rot[p] * (cd.parent_port - self.bodies[p].cog);
                    let w = k.w[p];
                    let al = k.alpha[p];
                    (
                        k.rot[p],
                        k.o[p] + rel,
                        w,
                        al,
                        k.v[p] + w.cross(&rel),
                        k.a[p] + al.cross(&rel) + w.cross(&w.cross(&rel)),
                    )
                }
            };
            let (dcm, u, th_d, th_dd) = match &self.model.connections[ci] {
                Connection::Revolute(j) => {
                    let slot = self.joint_slot(ci).expect("joint slot");
                    (j.dcm(s.q[slot]), rp * cd.axis, s.qd[slot], qdd[slot])
                }
                Connection::Rigid(c) => (c.dcm, V3::zeros(), 0.0, 0.0),
            };
            let ra = rp * dcm;
            let w = wp + u * th_d;
            let alpha = alp + u * th_dd + wp.cross(&(u * th_d));
            let rel = ra * (self.bodies[b].cog - cd.child_port);
            k.rot[b] = ra;
            k.o[b] = xp + rel;
            k.w[b] = w;
            k.alpha[b] = alpha;
            k.v[b] = vc + w.cross(&rel);
            k.a[b] = ac + alpha.cross(&rel) + w.cross(&w.cross(&rel));
            k.c[ci] = xp;
            k.u[ci] = u;
        }
        k
    }

    /// Generalized forces required for the given accelerations, `[root (6); joints]`,
    /// with external forces, follower inputs and root damping as applied loads.
    fn inverse_dynamics(&self, s: &OracleState, root_acc: &[f64; 6], qdd: &[f64], inputs: &[f64]) -> Result<Vec<f64>> {
        let k = self.kinematics(s, root_acc, qdd);
        let nb = self.bodies.len();
        let mut f = vec![V3::zeros(); nb];
        let mut n = vec![V3::zeros(); nb];
        for b in 0..nb {
            let bd = &self.bodies[b];
            let ji = k.rot[b] * bd.inertia * k.rot[b].transpose();
            f[b] = (k.a[b] + self.accel) * bd.mass;
            n[b] = ji * k.alpha[b] + k.w[b].cross(&(ji * k.w[b]));
        }
        let apply = |b: usize, x: V3, force: V3, torque: V3, f: &mut Vec<V3>, n: &mut Vec<V3>| {
            f[b] -= force;
            n[b] -= (x - k.o[b]).cross(&force) + torque;
        };
        for fd in &self.forces {
            let x = k.o[fd.body] + k.rot[fd.body] * (fd.port - self.bodies[fd.body].cog);
            apply(fd.body, x, fd.force, V3::zeros(), &mut f, &mut n);
        }
        if inputs.len() != self.model.inputs.len() {
            return Err(Error::model(format!(
                "expected {} input values, got {}",
                self.model.inputs.len(),
                inputs.len()
            )));
        }
        let mut joint_inputs = vec![0.0; self.n_joints()];
        for (inp, &val) in self.model.inputs.iter().zip(inputs) {
            match &inp.kind {
                InputKind::JointTorque { joint } => {
                    let ci = self.model.connection_index(joint)?;
                    let slot = self
                        .joint_slot(ci)
                        .ok_or_else(|| Error::model(format!("`{joint}` is not a revolute joint")))?;
                    joint_inputs[slot] += val;
                }
                InputKind::Force { body, port, direction } => {
                    let b = self.model.body_index(body)?;
                    let x = k.o[b] + k.rot[b] * (self.port_of(b, port)? - self.bodies[b].cog);
                    apply(b, x, k.rot[b] * direction * val, V3::zeros(), &mut f, &mut n);
                }
                InputKind::Torque { body, axis } => {
                    let b = self.model.body_index(body)?;
                    apply(b, k.o[b], V3::zeros(), k.rot[b] * axis * val, &mut f, &mut n);
                }
            }
        }
        let (nu, free) = self.masked_vel(s);
        if let (Some(r), true) = (self.tree.root_body, free) {
            let rot = k.rot[r];
            let fd = rot * V3::new(-self.damping[0] * nu[0], -self.damping[1] * nu[1], -self.damping[2] * nu[2]);
            let nd = rot * V3::new(-self.damping[3] * nu[3], -self.damping[4] * nu[4], -self.damping[5] * nu[5]);
            let x = k.o[r] + rot * (self.root_port - self.bodies[r].cog);
            apply(r, x, fd, nd, &mut f, &mut n);
        }
        // backward: wrench about each body's CoG, then about its joint point
        let mut fs = f.clone();
        let mut ns = n.clone();
        for &b in self.tree.order.iter().rev() {
            if let Some(ci) = self.tree.incoming[b] {
                if let Some(p) = self.tree.conn_parent[ci] {
                    let arm = k.o[b] - k.o[p];
                    let (fb, nb_) = (fs[b], ns[b]);
                    fs[p] += fb;
                    ns[p] += nb_ + arm.cross(&fb);
                }
            }
        }
        let mut out = vec![0.0; 6 + self.n_joints()];
        for (slot, &ci) in self.tree.joints.iter().enumerate() {
            let b = self.tree.conn_child[ci];
            let moment = ns[b] + (k.o[b] - k.c[ci]).cross(&fs[b]);
            out[6 + slot] = k.u[ci].dot(&moment) + self.conns[ci].friction * s.qd[slot] - joint_inputs[slot];
        }
        if let (Some(r), true) = (self.tree.root_body, free) {
            let rot = k.rot[r];
            let x = k.o[r] + rot * (self.root_port - self.bodies[r].cog);
            let moment = ns[r] + (k.o[r] - x).cross(&fs[r]);
            let fb = rot.transpose() * fs[r];
            let nb_ = rot.transpose() * moment;
            for i in 0..3 {
                out[i] = fb[i];
                out[3 + i] = nb_[i];
            }
        }
        Ok(out)
    }

    fn port_of(&self, b: usize, port: &str) -> Result<V3> {
        self.model.bodies[b].port_at(port, &self.point)
    }

    /// Motor torques holding the trim state, tree order.
    pub fn trim_torques(&self) -> Result<Vec<f64>> {
        let nj = self.n_joints();
        let id = self.inverse_dynamics(&self.trim, &[0.0; 6], &vec![0.0; nj], &vec![0.0; self.model.inputs.len()])?;
        Ok(id[6..].to_vec())
    }

    /// Kept root DOF followed by joints: generalized accelerations.
    pub fn nonlinear_accel(&self, s: &OracleState, torques: &[f64], inputs: &[f64]) -> Result<([f64; 6], Vec<f64>)> {
        let nj = self.n_joints();
        if torques.len() != nj || s.q.len() != nj || s.qd.len() != nj {
            return Err(Error::model("joint vector length does not match the model"));
        }
        let kept = if self.tree.root_body.is_some() { self.kept() } else { Vec::new() };
        let n = kept.len() + nj;
        let unpack = |x: &[f64]| -> ([f64; 6], Vec<f64>) {
            let mut ra = [0.0; 6];
            for (i, &k) in kept.iter().enumerate() {
                ra[k] = x[i];
            }
            (ra, x[kept.len()..].to_vec())
        };
        let pick = |id: &[f64]| -> Vec<f64> {
            kept.iter().map(|&k| id[k]).chain(id[6..].iter().copied()).collect()
        };
        let zero = vec![0.0; n];
        let (ra0, qa0) = unpack(&zero);
        let h = pick(&self.inverse_dynamics(s, &ra0, &qa0, inputs)?);
        let mut m = Mat::zeros(n, n);
        for col in 0..n {
            let mut e = zero.clone();
            e[col] = 1.0;
            let (ra, qa) = unpack(&e);
            let id = pick(&self.inverse_dynamics(s, &ra, &qa, inputs)?);
            for row in 0..n {
                m[(row, col)] = id[row] - h[row];
            }
        }
        let rhs = Mat::from_fn(n, 1, |i, _| {
            let tau = if i >= kept.len() { torques[i - kept.len()] } else { 0.0 };
            tau - h[i]
        });
        let lu = m.clone().lu();
        let sol = lu.solve(&rhs).ok_or(Error::Singular { what: "mass matrix".into() })?;
        if crate::lft::rcond(&m) < 1e-14 {
            return Err(Error::Singular { what: "mass matrix".into() });
        }
        let x: Vec<f64> = sol.iter().copied().collect();
        Ok(unpack(&x))
    }

    /// Full state derivative.
    pub fn derivative(&self, s: &OracleState, torques: &[f64], inputs: &[f64]) -> Result<OracleState> {
        let (ra, qdd) = self.nonlinear_accel(s, torques, inputs)?;
        let (nu, free) = self.masked_vel(s);
        let mut pose_d = [0.0; 6];
        if free && self.tree.root_body.is_some() {
            let rot = self.root_rot(s);
            let pd = rot * V3::new(nu[0], nu[1], nu[2]);
            let e = EulerState::new(s.root_pose[3], s.root_pose[4], s.root_pose[5]);
            let gi = euler_rate_map(&e)?
                .try_inverse()
                .ok_or(Error::GimbalLock { cos_pitch: e.angles.y.cos() })?;
            let ed = gi * V3::new(nu[3], nu[4], nu[5]);
            pose_d = [pd.x, pd.y, pd.z, ed.x, ed.y, ed.z];
        }
        Ok(OracleState {
            root_pose: pose_d,
            root_vel: ra,
            q: s.qd.clone(),
            qd: qdd,
        })
    }

    /// Kinetic plus potential energy.
    pub fn energy(&self, s: &OracleState) -> f64 {
        let nj = self.n_joints();
        let k = self.kinematics(s, &[0.0; 6], &vec![0.0; nj]);
        let mut e = 0.0;
        for (b, bd) in self.bodies.iter().enumerate() {
            let ji = k.rot[b] * bd.inertia * k.rot[b].transpose();
            e += 0.5 * bd.mass * k.v[b].norm_squared() + 0.5 * k.w[b].dot(&(ji * k.w[b]));
            e += bd.mass * self.accel.dot(&k.o[b]);
        }
        for fd in &self.forces {
            let x = k.o[fd.body] + k.rot[fd.body] * (fd.port - self.bodies[fd.body].cog);
            e -= fd.force.dot(&x);
        }
        e
    }

    /// Largest generalized acceleration at the trim state under `torques`.
    pub fn trim_residual(&self, torques: &[f64]) -> Result<f64> {
        let (ra, qdd) = self.nonlinear_accel(&self.trim, torques, &vec![0.0; self.model.inputs.len()])?;
        Ok(ra.iter().chain(qdd.iter()).fold(0.0f64, |m, v| m.max(v.abs())))
    }

    /// Linear state `[kept root vel; qd; kept root pose; q]` as a perturbation of the trim.
    fn perturbed(&self, x: &[f64]) -> OracleState {
        let kept = if self.tree.root_body.is_some() { self.kept() } else { Vec::new() };
        let nk = kept.len();
        let nj = self.n_joints();
        let n = nk + nj;
        let mut s = self.trim.clone();
        for (i, &k) in kept.iter().enumerate() {
            s.root_vel[k] = x[i];
        }
        for j in 0..nj {
            s.qd[j] = x[nk + j];
        }
        let rot0 = self.root_rot(&self.trim);
        let mut dp = V3::zeros();
        for (i, &k) in kept.iter().enumerate() {
            if k < 3 {
                dp[k] = x[n + i];
            } else {
                s.root_pose[k] += x[n + i];
            }
        }
        let dpi = rot0 * dp;
        for i in 0..3 {
            s.root_pose[i] += dpi[i];
        }
        for j in 0..nj {
            s.q[j] += x[n + nk + j];
        }
        s
    }

    fn linear_rate(&self, d: &OracleState) -> Vec<f64> {
        let kept = if self.tree.root_body.is_some() { self.kept() } else { Vec::new() };
        let rot0 = self.root_rot(&self.trim);
        let pb = rot0.transpose() * V3::new(d.root_pose[0], d.root_pose[1], d.root_pose[2]);
        let mut out: Vec<f64> = kept.iter().map(|&k| d.root_vel[k]).collect();
        out.extend(d.qd.iter().copied());
        out.extend(kept.iter().map(|&k| if k < 3 { pb[k] } else { d.root_pose[k] }));
        out.extend(d.q.iter().copied());
        out
    }

    pub fn n_states(&self) -> usize {
        let nk = if self.tree.root_body.is_some() { self.kept().len() } else { 0 };
        2 * (nk + self.n_joints())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdConfig {
    /// `h_i = step * max(1, |x_i|)`.
    pub step: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig { step: 1e-6 }
    }
}

/// Central-difference `(A, B)` around the trim, same state order as the assembly.
pub fn fd_linearize(ev: &NonlinearEvaluator<'_>, torques: &[f64], cfg: FdConfig) -> Result<(Mat, Mat)> {
    if cfg.step <= 0.0 {
        return Err(Error::model("finite-difference step must be positive"));
    }
    let res = ev.trim_residual(torques)?;
    if res > TRIM_TOL {
        return Err(Error::Trim {
            residual: res,
            tolerance: TRIM_TOL,
            context: "finite-difference linearization".into(),
        });
    }
    let n = ev.n_states();
    let ni = ev.model.inputs.len();
    let u0 = vec![0.0; ni];
    let x0 = vec![0.0f64; n];
    let f = |x: &[f64], u: &[f64]| -> Result<Vec<f64>> {
        let s = ev.perturbed(x);
        Ok(ev.linear_rate(&ev.derivative(&s, torques, u)?))
    };
    let mut a = Mat::zeros(n, n);
    for j in 0..n {
        let h = cfg.step * x0[j].abs().max(1.0);
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[j] += h;
        xm[j] -= h;
        let (fp, fm) = (f(&xp, &u0)?, f(&xm, &u0)?);
        for i in 0..n {
            a[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let mut b = Mat::zeros(n, ni);
    for j in 0..ni {
        let h = cfg.step;
        let mut up = u0.clone();
        let mut um = u0.clone();
        up[j] += h;
        um[j] -= h;
        let (fp, fm) = (f(&x0, &up)?, f(&x0, &um)?);
        for i in 0..n {
            b[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok((a, b))
}

/// `dE/dt` by central differences along the trajectory direction.
pub fn energy_rate_fd(ev: &NonlinearEvaluator<'_>, s: &OracleState, torques: &[f64], inputs: &[f64], h: f64) -> Result<f64> {
    let d = ev.derivative(s, torques, inputs)?;
    Ok((ev.energy(&s.axpy(h, &d)) - ev.energy(&s.axpy(-h, &d))) / (2.0 * h))
}

/// Relative Frobenius distance `|x - y| / |y|`.
pub fn rel_frobenius(x: &Mat, y: &Mat) -> f64 {
    let den = y.norm();
    if den == 0.0 {
        x.norm()
    } else {
        (x - y).norm() / den
    }
}
