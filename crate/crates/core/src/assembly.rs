//! Multibody assembly: equilibrium geometry, equilibrium wrenches and the
//! parameter-dependent linear model.
//!
//! Generalized coordinates are the kept root DOF followed by the revolute
//! joints in tree order. Root translations are body-frame displacements at
//! equilibrium, root rotations a body-frame rotation vector. The exported
//! state uses Euler angles for the root, `dTheta = Gamma^-1 dphi`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bodies::{lift_vec, DynamicsRole, ExprVec3, RigidBody};
use crate::error::{Error, Result};
use crate::joints::{Connection, Endpoint, JointAngle, RevoluteJoint};
use crate::lft::{
    BoundsMode, Expr, LftExport, LftMatrix, Mat, ParamKind, ParamSet, Point,
};
use crate::spatial::{
    euler_from_matrix, euler_matrix, euler_rate_map, m3_from_dyn, skew_lft, to_dyn, v3_from_dyn,
    EulerSequence, M3, V3,
};
use crate::ss::{LftStateSpace, StateSpace};

pub const STATE_SPACE_FORMAT: &str = "lft-state-space/1";
/// Residual tolerance on the kept root DOF of a free root.
pub const ROOT_BALANCE_TOL: f64 = 1e-9;

// ---- model description -------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum Root {
    Ground,
    Body {
        body: String,
        /// Reference port; the CoG when absent.
        port: Option<String>,
        /// Equilibrium Euler angles (rad).
        euler: V3,
        /// Damping on the body-frame velocity `[v; w]` at the reference point.
        damping: [f64; 6],
    },
}

/// Force constant in the inertial frame, applied at a body port.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantForce {
    pub name: String,
    pub body: String,
    pub port: String,
    pub force: ExprVec3,
    /// Replace `force` by the total weight, `sum(m) a`.
    pub balance: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Boundary {
    /// `a = -g`, inertial frame.
    pub acceleration: V3,
    pub forces: Vec<ConstantForce>,
}

impl Default for Boundary {
    fn default() -> Self {
        Boundary {
            acceleration: V3::new(0.0, 0.0, 9.81),
            forces: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InputKind {
    JointTorque { joint: String },
    /// Force along a body-frame direction at a port.
    Force { body: String, port: String, direction: V3 },
    /// Torque about a body-frame axis.
    Torque { body: String, axis: V3 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Input {
    pub name: String,
    pub kind: InputKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OutputKind {
    JointAngle { joint: String },
    JointRate { joint: String },
    /// Euler angle component (0, 1, 2) of a body.
    EulerAngle { body: String, index: usize },
    EulerRate { body: String, index: usize },
    /// Inertial position component of a port.
    Position { body: String, port: String, index: usize },
    Velocity { body: String, port: String, index: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub name: String,
    pub kind: OutputKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultibodyModel {
    pub name: String,
    pub params: ParamSet,
    pub bodies: Vec<RigidBody>,
    pub connections: Vec<Connection>,
    pub root: Root,
    pub boundary: Boundary,
    pub inputs: Vec<Input>,
    pub outputs: Vec<Output>,
}

// ---- topology ------------------------------------------------------------------

/// Tree structure derived from a model.
#[derive(Clone, Debug)]
pub struct Tree {
    /// Bodies, depth first from the root in declaration order.
    pub order: Vec<usize>,
    /// Incoming connection of each body; `None` for a free root.
    pub incoming: Vec<Option<usize>>,
    /// Parent body of each connection; `None` for ground.
    pub conn_parent: Vec<Option<usize>>,
    pub conn_child: Vec<usize>,
    /// Root body for a free root.
    pub root_body: Option<usize>,
    /// Revolute joints in tree order.
    pub joints: Vec<usize>,
    /// Descendants of each body, itself included.
    pub subtree: Vec<Vec<usize>>,
}

impl Tree {
    pub fn in_subtree(&self, top: usize, b: usize) -> bool {
        self.subtree[top].contains(&b)
    }
}

impl MultibodyModel {
    pub fn body_index(&self, name: &str) -> Result<usize> {
        self.bodies
            .iter()
            .position(|b| b.name == name)
            .ok_or_else(|| Error::model(format!("unknown body `{name}`")))
    }

    pub fn connection_index(&self, name: &str) -> Result<usize> {
        self.connections
            .iter()
            .position(|c| c.name() == name)
            .ok_or_else(|| Error::model(format!("unknown connection `{name}`")))
    }

    fn endpoint_body(&self, e: &Endpoint) -> Result<Option<usize>> {
        match e {
            Endpoint::Ground => Ok(None),
            Endpoint::Port { body, port } => {
                let i = self.body_index(body)?;
                self.bodies[i].port(port)?;
                Ok(Some(i))
            }
        }
    }

    /// Check names, parameters and the tree structure.
    pub fn tree(&self) -> Result<Tree> {
        let nb = self.bodies.len();
        if nb == 0 {
            return Err(Error::model("model has no bodies"));
        }
        for (i, b) in self.bodies.iter().enumerate() {
            if self.bodies[..i].iter().any(|o| o.name == b.name) {
                return Err(Error::model(format!("duplicate body `{}`", b.name)));
            }
            b.validate(&self.params)?;
        }
        for (i, c) in self.connections.iter().enumerate() {
            if self.connections[..i].iter().any(|o| o.name() == c.name()) {
                return Err(Error::model(format!("duplicate connection `{}`", c.name())));
            }
            c.validate(&self.params)?;
        }
        let forward: Vec<usize> = (0..nb)
            .filter(|&i| self.bodies[i].role == DynamicsRole::Forward)
            .collect();
        let root_body = match &self.root {
            Root::Ground => {
                if !forward.is_empty() {
                    return Err(Error::model("a grounded model has no forward-role body"));
                }
                None
            }
            Root::Body { body, port, euler, .. } => {
                let r = self.body_index(body)?;
                if forward != vec![r] {
                    return Err(Error::model(format!(
                        "exactly one forward-role body is allowed and it must be the root `{body}`"
                    )));
                }
                if let Some(p) = port {
                    self.bodies[r].port(p)?;
                }
                if !euler.iter().all(|v| v.is_finite()) {
                    return Err(Error::model("root Euler angles must be finite"));
                }
                Some(r)
            }
        };
        let mut incoming = vec![None; nb];
        let mut conn_parent = Vec::new();
        let mut conn_child = Vec::new();
        for (ci, c) in self.connections.iter().enumerate() {
            let p = self.endpoint_body(c.parent())?;
            let a = self
                .endpoint_body(c.child())?
                .ok_or_else(|| Error::model(format!("connection `{}`: child cannot be ground", c.name())))?;
            if p.is_none() && root_body.is_some() {
                return Err(Error::model(format!(
                    "connection `{}` attaches to ground but the root is a free body",
                    c.name()
                )));
            }
            if incoming[a].is_some() {
                return Err(Error::model(format!(
                    "body `{}` has more than one parent connection",
                    self.bodies[a].name
                )));
            }
            if Some(a) == root_body {
                return Err(Error::model("the root body cannot be a connection child"));
            }
            incoming[a] = Some(ci);
            conn_parent.push(p);
            conn_child.push(a);
        }
        // depth first from the root
        let mut order = Vec::with_capacity(nb);
        let mut joints = Vec::new();
        let visit = |b: usize, order: &mut Vec<usize>, joints: &mut Vec<usize>| {
            order.push(b);
            if let Some(ci) = incoming[b] {
                if matches!(self.connections[ci], Connection::Revolute(_)) {
                    joints.push(ci);
                }
            }
        };
        let tops: Vec<usize> = match root_body {
            Some(r) => vec![r],
            None => (0..self.connections.len())
                .filter(|&ci| conn_parent[ci].is_none())
                .map(|ci| conn_child[ci])
                .collect(),
        };
        for t in tops {
            visit(t, &mut order, &mut joints);
            // iterative preorder: children in declaration order
            let mut frames: Vec<(usize, usize)> = vec![(t, 0)];
            while let Some((b, next)) = frames.pop() {
                let mut found = None;
                for ci in next..self.connections.len() {
                    if conn_parent[ci] == Some(b) {
                        found = Some(ci);
                        break;
                    }
                }
                if let Some(ci) = found {
                    frames.push((b, ci + 1));
                    let child = conn_child[ci];
                    if order.contains(&child) {
                        return Err(Error::model("connections form a cycle"));
                    }
                    visit(child, &mut order, &mut joints);
                    frames.push((child, 0));
                }
            }
        }
        if order.len() != nb {
            let missing: Vec<&str> = (0..nb)
                .filter(|b| !order.contains(b))
                .map(|b| self.bodies[b].name.as_str())
                .collect();
            return Err(Error::model(format!(
                "disconnected tree: bodies {missing:?} are not reachable from the root"
            )));
        }
        let mut subtree = vec![Vec::new(); nb];
        for &b in order.iter().rev() {
            let mut s = vec![b];
            for ci in 0..self.connections.len() {
                if conn_parent[ci] == Some(b) {
                    s.extend(subtree[conn_child[ci]].iter().copied());
                }
            }
            subtree[b] = s;
        }
        Ok(Tree {
            order,
            incoming,
            conn_parent,
            conn_child,
            root_body,
            joints,
            subtree,
        })
    }

    /// Copy of the model with every parameter frozen at `point`.
    pub fn frozen(&self, point: &Point) -> Result<MultibodyModel> {
        let point = self.params.complete(point);
        let fix = |e: &Expr| -> Result<Expr> { Ok(Expr::c(e.eval(&point)?)) };
        let fix3 = |v: &ExprVec3| -> Result<ExprVec3> { Ok([fix(&v[0])?, fix(&v[1])?, fix(&v[2])?]) };
        let mut out = self.clone();
        out.params = ParamSet::new();
        for b in &mut out.bodies {
            b.mass = fix(&b.mass)?;
            for i in 0..3 {
                for k in 0..3 {
                    b.inertia[i][k] = fix(&b.inertia[i][k])?;
                }
            }
            b.cog = fix3(&b.cog)?;
            for p in &mut b.ports {
                p.position = fix3(&p.position)?;
            }
        }
        for c in &mut out.connections {
            if let Connection::Revolute(j) = c {
                let th = j.angle_at(&point)?;
                j.angle = JointAngle::Fixed(th);
            }
        }
        for f in &mut out.boundary.forces {
            f.force = fix3(&f.force)?;
        }
        Ok(out)
    }

    fn revolute(&self, ci: usize) -> Option<&RevoluteJoint> {
        match &self.connections[ci] {
            Connection::Revolute(j) => Some(j),
            Connection::Rigid(_) => None,
        }
    }
}

// ---- LFT helpers ----------------------------------------------------------------

fn c3(v: &V3) -> LftMatrix {
    LftMatrix::constant(to_dyn(v))
}

fn cross(a: &LftMatrix, b: &LftMatrix) -> LftMatrix {
    skew_lft(a).mul(b).reduce()
}

fn dot(a: &LftMatrix, b: &LftMatrix) -> LftMatrix {
    a.transpose().mul(b).reduce()
}

fn sum_reduce(a: &LftMatrix, b: &LftMatrix) -> LftMatrix {
    a.add(b).reduce()
}

// ---- step 1 ----------------------------------------------------------------------

/// Equilibrium geometry, inertial frame, origin at the root reference point.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub tree: Tree,
    /// Body to inertial DCM.
    pub rotation: Vec<LftMatrix>,
    /// CoG positions.
    pub cog: Vec<LftMatrix>,
    /// Connection points.
    pub conn_point: Vec<LftMatrix>,
    /// Inertial joint axes (revolute joints only).
    pub axis: Vec<Option<LftMatrix>>,
    /// `[a]_Rb` per body.
    pub accel_body: Vec<LftMatrix>,
    /// Root DCM.
    pub root_rotation: M3,
}

impl Geometry {
    /// Inertial position of a body port.
    pub fn port_point(&self, model: &MultibodyModel, b: usize, port: &str) -> Result<LftMatrix> {
        let body = &model.bodies[b];
        let rel = body.cog_to_port_lft(port, &model.params)?;
        Ok(sum_reduce(&self.cog[b], &self.rotation[b].mul(&rel)))
    }

    /// Euler angles of each body at a point.
    pub fn euler_at(&self, point: &Point) -> Result<Vec<V3>> {
        self.rotation
            .iter()
            .map(|r| Ok(euler_from_matrix(&m3_from_dyn(&r.evaluate(point)?))?.angles))
            .collect()
    }
}

pub fn step1_geometry(model: &MultibodyModel) -> Result<Geometry> {
    let tree = model.tree()?;
    let nb = model.bodies.len();
    let a = model.boundary.acceleration;
    let mut rotation = vec![LftMatrix::identity(3); nb];
    let mut cog = vec![LftMatrix::zeros(3, 1); nb];
    let mut conn_point = vec![LftMatrix::zeros(3, 1); model.connections.len()];
    let mut axis = vec![None; model.connections.len()];
    let mut root_rotation = M3::identity();
    if let (Some(r), Root::Body { port, euler, .. }) = (tree.root_body, &model.root) {
        root_rotation = euler_matrix(euler);
        let body = &model.bodies[r];
        rotation[r] = LftMatrix::constant(to_dyn(&root_rotation));
        // CoG relative to the reference point
        cog[r] = match port {
            Some(p) => rotation[r].mul(&body.cog_to_port_lft(p, &model.params)?.neg()).reduce(),
            None => LftMatrix::zeros(3, 1),
        };
    }
    for &b in &tree.order {
        let Some(ci) = tree.incoming[b] else { continue };
        let conn = &model.connections[ci];
        let (rp, xp) = match tree.conn_parent[ci] {
            None => (LftMatrix::identity(3), LftMatrix::zeros(3, 1)),
            Some(p) => {
                let port = conn.parent().port_name().unwrap_or_default();
                let rel = model.bodies[p].cog_to_port_lft(port, &model.params)?;
                (rotation[p].clone(), sum_reduce(&cog[p], &rotation[p].mul(&rel)))
            }
        };
        let ra = rp.mul(&conn.dcm_lft()?).reduce();
        let child_port = conn.child().port_name().unwrap_or_default();
        let rel = model.bodies[b].cog_to_port_lft(child_port, &model.params)?;
        cog[b] = xp.sub(&ra.mul(&rel)).reduce();
        if let Connection::Revolute(j) = conn {
            axis[ci] = Some(rp.mul(&c3(&j.axis)).reduce());
        }
        rotation[b] = ra;
        conn_point[ci] = xp;
    }
    let accel_body = rotation
        .iter()
        .map(|r| r.transpose().mul(&c3(&a)).reduce())
        .collect();
    let geo = Geometry {
        tree,
        rotation,
        cog,
        conn_point,
        axis,
        accel_body,
        root_rotation,
    };
    // gimbal check at nominal
    let nominal = model.params.nominal_point();
    for (b, r) in geo.rotation.iter().enumerate() {
        let e = euler_from_matrix(&m3_from_dyn(&r.evaluate(&nominal)?))?;
        euler_rate_map(&e).map_err(|err| match err {
            Error::GimbalLock { cos_pitch } => Error::model(format!(
                "gimbal lock on body `{}` at equilibrium (cos pitch = {cos_pitch:e})",
                model.bodies[b].name
            )),
            other => other,
        })?;
    }
    Ok(geo)
}

// ---- step 2 ----------------------------------------------------------------------

/// Aggregates of the pseudo-forces `g` (weights `m a`, minus external forces)
/// over a subtree, with positions `x`.
#[derive(Clone, Debug)]
struct Aggregate {
    /// `sum g`
    f: LftMatrix,
    /// `sum x X g`
    mo: LftMatrix,
    /// `sum x g^T`
    n: LftMatrix,
    /// `sum g . x`
    s: LftMatrix,
}

impl Aggregate {
    fn zero() -> Self {
        Aggregate {
            f: LftMatrix::zeros(3, 1),
            mo: LftMatrix::zeros(3, 1),
            n: LftMatrix::zeros(3, 3),
            s: LftMatrix::zeros(1, 1),
        }
    }

    fn push(&mut self, g: &LftMatrix, x: &LftMatrix) {
        self.f = sum_reduce(&self.f, g);
        self.mo = sum_reduce(&self.mo, &cross(x, g));
        self.n = sum_reduce(&self.n, &x.mul(&g.transpose()));
        self.s = sum_reduce(&self.s, &dot(g, x));
    }

    fn merge(&mut self, o: &Aggregate) {
        self.f = sum_reduce(&self.f, &o.f);
        self.mo = sum_reduce(&self.mo, &o.mo);
        self.n = sum_reduce(&self.n, &o.n);
        self.s = sum_reduce(&self.s, &o.s);
    }

    /// Moment about `c`.
    fn moment_about(&self, c: &LftMatrix) -> LftMatrix {
        self.mo.sub(&cross(c, &self.f)).reduce()
    }

    /// `h = N_c u - u s_c`, with `N_c = N - c f^T` and `s_c = s - c . f`.
    fn hessian_vector(&self, c: &LftMatrix, u: &LftMatrix) -> LftMatrix {
        let nc = self.n.sub(&c.mul(&self.f.transpose())).reduce();
        let sc = self.s.sub(&dot(c, &self.f)).reduce();
        nc.mul(u).sub(&u.mul(&sc)).reduce()
    }
}

#[derive(Clone, Debug)]
pub struct JointEquilibrium {
    pub connection: usize,
    /// Wrench of the child on the joint, child frame (6x1).
    pub w_aj: LftMatrix,
    /// Equilibrium torque (1x1).
    pub cm: LftMatrix,
}

#[derive(Clone, Debug)]
pub struct EquilibriumSolution {
    pub geometry: Geometry,
    pub joints: Vec<JointEquilibrium>,
    /// Constant forces after balancing, inertial frame.
    pub forces: Vec<LftMatrix>,
    /// Net generalized force on the root, body frame `[f; n]` (6x1); zero for ground.
    pub root_residual: LftMatrix,
    subtree_agg: Vec<Aggregate>,
}

impl EquilibriumSolution {
    /// Equilibrium torque of each revolute joint at a point, tree order.
    pub fn torques_at(&self, point: &Point) -> Result<Vec<f64>> {
        self.joints
            .iter()
            .map(|j| Ok(j.cm.evaluate(point)?[(0, 0)]))
            .collect()
    }
}

pub fn step2_wrenches(model: &MultibodyModel, geo: Geometry) -> Result<EquilibriumSolution> {
    let tree = &geo.tree;
    let a = c3(&model.boundary.acceleration);
    let mut total_mass = LftMatrix::zeros(1, 1);
    for b in &model.bodies {
        total_mass = sum_reduce(&total_mass, &b.mass_lft(&model.params)?);
    }
    let mut own: Vec<Aggregate> = vec![Aggregate::zero(); model.bodies.len()];
    for (b, body) in model.bodies.iter().enumerate() {
        let g = a.mul(&body.mass_lft(&model.params)?).reduce();
        own[b].push(&g, &geo.cog[b]);
    }
    let mut forces = Vec::new();
    for f in &model.boundary.forces {
        let b = model.body_index(&f.body)?;
        let x = geo.port_point(model, b, &f.port)?;
        let fv = if f.balance {
            a.mul(&total_mass).reduce()
        } else {
            lift_vec(&f.force, &model.params)?
        };
        own[b].push(&fv.neg(), &x);
        forces.push(fv);
    }
    let mut agg = own;
    for &b in tree.order.iter().rev() {
        if let Some(ci) = tree.incoming[b] {
            if let Some(p) = tree.conn_parent[ci] {
                let child = agg[b].clone();
                agg[p].merge(&child);
            }
        }
    }
    let mut joints = Vec::new();
    for &ci in &tree.joints {
        let child = tree.conn_child[ci];
        let c = &geo.conn_point[ci];
        let u = geo.axis[ci].as_ref().expect("revolute axis");
        let n = agg[child].moment_about(c);
        let ra_t = geo.rotation[child].transpose();
        let w_aj = ra_t.mul(&agg[child].f).vstack(&ra_t.mul(&n)).neg().reduce();
        let cm = dot(u, &n);
        joints.push(JointEquilibrium {
            connection: ci,
            w_aj,
            cm,
        });
    }
    let root_residual = match tree.root_body {
        None => LftMatrix::zeros(6, 1),
        Some(r) => {
            let rt = to_dyn(&geo.root_rotation.transpose());
            agg[r]
                .f
                .vstack(&agg[r].mo)
                .mul_const_left(&crate::lft::bdiag(&rt, &rt))
                .neg()
                .reduce()
        }
    };
    let sol = EquilibriumSolution {
        geometry: geo,
        joints,
        forces,
        root_residual,
        subtree_agg: agg,
    };
    check_root_balance(model, &sol)?;
    Ok(sol)
}

fn root_mask(model: &MultibodyModel, tree: &Tree) -> [bool; 6] {
    match tree.root_body {
        Some(r) => model.bodies[r].dof_mask,
        None => [false; 6],
    }
}

fn check_root_balance(model: &MultibodyModel, sol: &EquilibriumSolution) -> Result<()> {
    let mask = root_mask(model, &sol.geometry.tree);
    if !mask.iter().any(|&k| k) {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut points = vec![model.params.nominal_point()];
    for _ in 0..20 {
        points.push(model.params.random_point(&mut rng));
    }
    let total: f64 = model
        .bodies
        .iter()
        .map(|b| b.mass_at(&model.params.nominal_point()).unwrap_or(0.0))
        .sum::<f64>()
        .max(1.0);
    let scale = total * model.boundary.acceleration.norm().max(1.0);
    for p in &points {
        let r = sol.root_residual.evaluate(p)?;
        for k in 0..6 {
            if mask[k] && r[(k, 0)].abs() > ROOT_BALANCE_TOL * scale {
                return Err(Error::Trim {
                    residual: r[(k, 0)].abs(),
                    tolerance: ROOT_BALANCE_TOL * scale,
                    context: format!(
                        "free root is not balanced along DOF {k}; accelerating trims are not supported"
                    ),
                });
            }
        }
    }
    Ok(())
}

// ---- step 3 ----------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coord {
    /// Root translation along a body axis.
    Trans(usize),
    /// Root rotation about a body axis.
    Rot(usize),
    /// Revolute joint, by connection index.
    Joint(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct AssemblyOptions {
    /// Structural reduction during linearization and of the final model.
    pub reduce: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { reduce: true }
    }
}

impl AssemblyOptions {
    pub fn unreduced() -> Self {
        AssemblyOptions { reduce: false }
    }

    pub fn reduced() -> Self {
        AssemblyOptions { reduce: true }
    }
}

/// Numeric equilibrium summary at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub bodies: Vec<BodyReport>,
    pub joints: Vec<JointReport>,
    pub root_residual: [f64; 6],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyReport {
    pub name: String,
    pub euler_rad: [f64; 3],
    pub accel_body: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointReport {
    pub name: String,
    pub angle_rad: f64,
    pub torque: f64,
    pub wrench_child_on_joint: [f64; 6],
}

pub fn equilibrium_report(model: &MultibodyModel, sol: &EquilibriumSolution, point: &Point) -> Result<EquilibriumReport> {
    let point = model.params.complete(point);
    let geo = &sol.geometry;
    let euler = geo.euler_at(&point)?;
    let bodies = geo
        .tree
        .order
        .iter()
        .map(|&b| {
            let acc = geo.accel_body[b].evaluate(&point)?;
            Ok(BodyReport {
                name: model.bodies[b].name.clone(),
                euler_rad: [euler[b].x, euler[b].y, euler[b].z],
                accel_body: [acc[(0, 0)], acc[(1, 0)], acc[(2, 0)]],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let joints = sol
        .joints
        .iter()
        .map(|j| {
            let w = j.w_aj.evaluate(&point)?;
            let joint = model.revolute(j.connection).expect("revolute");
            Ok(JointReport {
                name: joint.name.clone(),
                angle_rad: joint.angle_at(&point)?,
                torque: j.cm.evaluate(&point)?[(0, 0)],
                wrench_child_on_joint: std::array::from_fn(|k| w[(k, 0)]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let r = sol.root_residual.evaluate(&point)?;
    Ok(EquilibriumReport {
        bodies,
        joints,
        root_residual: std::array::from_fn(|k| r[(k, 0)]),
    })
}

/// Parameter-dependent linear model.
#[derive(Clone, Debug)]
pub struct LinearLftModel {
    pub name: String,
    pub system: LftStateSpace,
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub params: ParamSet,
    /// Occurrences before the final reduction.
    pub occurrences_before: BTreeMap<String, usize>,
    pub equilibrium: EquilibriumReport,
}

impl LinearLftModel {
    pub fn n_states(&self) -> usize {
        self.system.n_states
    }

    pub fn occurrences(&self) -> BTreeMap<String, usize> {
        self.system.system.occurrences()
    }

    /// Names of the parameters in each block.
    pub fn delta_blocks(&self) -> BTreeMap<ParamKind, Vec<String>> {
        let mut out: BTreeMap<ParamKind, Vec<String>> = BTreeMap::new();
        for p in self.system.system.params() {
            out.entry(p.kind).or_default().push(p.name.clone());
        }
        out
    }

    pub fn to_export(&self) -> LinearModelExport {
        let blocks = self.delta_blocks();
        let names = |k: ParamKind| blocks.get(&k).cloned().unwrap_or_default();
        LinearModelExport {
            format: STATE_SPACE_FORMAT.to_string(),
            name: self.name.clone(),
            euler_sequence: EulerSequence::XyzIntrinsic.tag().to_string(),
            n_states: self.n_states(),
            states: self.states.clone(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            parameters: self.params.iter().cloned().collect(),
            angles: self.params.angles().cloned().collect(),
            delta_uncertain: names(ParamKind::Uncertain),
            delta_varying: names(ParamKind::Varying),
            delta_design: names(ParamKind::Design),
            occurrences_before: self.occurrences_before.clone(),
            occurrences_after: self.occurrences(),
            system: self.system.system.to_export(),
            a: self.system.a().to_export(),
            b: self.system.b().to_export(),
            c: self.system.c().to_export(),
            d: self.system.d().to_export(),
            equilibrium: self.equilibrium.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_export())?)
    }

    pub fn from_json(s: &str) -> Result<LinearLftModel> {
        let e: LinearModelExport = serde_json::from_str(s)?;
        e.to_model()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearModelExport {
    pub format: String,
    pub name: String,
    pub euler_sequence: String,
    pub n_states: usize,
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub parameters: Vec<crate::lft::Param>,
    /// Tangent parameters standing for angles; also listed in `parameters`.
    #[serde(default)]
    pub angles: Vec<crate::lft::HalfTanParam>,
    pub delta_uncertain: Vec<String>,
    pub delta_varying: Vec<String>,
    pub delta_design: Vec<String>,
    pub occurrences_before: BTreeMap<String, usize>,
    pub occurrences_after: BTreeMap<String, usize>,
    /// `[A B; C D]` with the shared perturbation block.
    pub system: LftExport,
    /// Individually reduced blocks, for consumers needing one matrix only.
    pub a: LftExport,
    pub b: LftExport,
    pub c: LftExport,
    pub d: LftExport,
    pub equilibrium: EquilibriumReport,
}

impl LinearModelExport {
    pub fn to_model(&self) -> Result<LinearLftModel> {
        if self.format != STATE_SPACE_FORMAT {
            return Err(Error::schema("format", "format", format!("expected `{STATE_SPACE_FORMAT}`")));
        }
        let system = self.system.to_lft()?;
        let n = self.n_states;
        if system.shape() != (n + self.outputs.len(), n + self.inputs.len()) {
            return Err(Error::schema("system", "rows", "shape does not match the name lists"));
        }
        let mut params = ParamSet::new();
        for p in &self.parameters {
            match self.angles.iter().find(|a| a.t.name == p.name) {
                Some(a) => params.insert_angle(a.clone())?,
                None => params.insert(p.clone())?,
            }
        }
        Ok(LinearLftModel {
            name: self.name.clone(),
            system: LftStateSpace::new(system, n),
            states: self.states.clone(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            params,
            occurrences_before: self.occurrences_before.clone(),
            equilibrium: self.equilibrium.clone(),
        })
    }
}

/// Generalized coordinates in state order.
pub fn coordinates(model: &MultibodyModel, tree: &Tree) -> Vec<Coord> {
    let mask = root_mask(model, tree);
    let mut out: Vec<Coord> = (0..3).filter(|&i| mask[i]).map(Coord::Trans).collect();
    out.extend((0..3).filter(|&i| mask[3 + i]).map(Coord::Rot));
    out.extend(tree.joints.iter().map(|&ci| Coord::Joint(ci)));
    out
}

/// State names `[velocities; positions]`.
pub fn state_names(model: &MultibodyModel, coords: &[Coord]) -> Vec<String> {
    const T: [&str; 3] = ["x", "y", "z"];
    let root = match &model.root {
        Root::Body { body, .. } => body.clone(),
        Root::Ground => "ground".into(),
    };
    let mut vel = Vec::new();
    let mut pos = Vec::new();
    for c in coords {
        match c {
            Coord::Trans(i) => {
                vel.push(format!("{root}.v{}", T[*i]));
                pos.push(format!("{root}.{}", T[*i]));
            }
            Coord::Rot(i) => {
                vel.push(format!("{root}.w{}", T[*i]));
                pos.push(format!("{root}.r{}", T[*i]));
            }
            Coord::Joint(ci) => {
                let n = model.connections[*ci].name();
                vel.push(format!("{n}.rate"));
                pos.push(format!("{n}.angle"));
            }
        }
    }
    vel.extend(pos);
    vel
}

struct Kin<'a> {
    sol: &'a EquilibriumSolution,
    coords: Vec<Coord>,
}

impl Kin<'_> {
    fn geo(&self) -> &Geometry {
        &self.sol.geometry
    }

    fn affects(&self, k: usize, b: usize) -> bool {
        let t = &self.geo().tree;
        match self.coords[k] {
            Coord::Trans(_) | Coord::Rot(_) => true,
            Coord::Joint(ci) => t.in_subtree(t.conn_child[ci], b),
        }
    }

    /// Axis and pivot of a rotational coordinate.
    fn rot(&self, k: usize) -> Option<(LftMatrix, LftMatrix)> {
        let geo = self.geo();
        match self.coords[k] {
            Coord::Trans(_) => None,
            Coord::Rot(i) => Some((
                LftMatrix::constant(to_dyn(&geo.root_rotation).columns(i, 1).into_owned()),
                LftMatrix::zeros(3, 1),
            )),
            Coord::Joint(ci) => Some((geo.axis[ci].clone().expect("axis"), geo.conn_point[ci].clone())),
        }
    }

    /// Inertial `[linear; angular]` motion of a point of body `b` per unit coordinate.
    fn jacobian_column(&self, k: usize, b: usize, x: &LftMatrix) -> LftMatrix {
        if !self.affects(k, b) {
            return LftMatrix::zeros(6, 1);
        }
        match self.coords[k] {
            Coord::Trans(i) => LftMatrix::constant(to_dyn(&self.geo().root_rotation).columns(i, 1).into_owned())
                .vstack(&LftMatrix::zeros(3, 1)),
            _ => {
                let (u, c) = self.rot(k).expect("rotational");
                cross(&u, &x.sub(&c)).vstack(&u).reduce()
            }
        }
    }

    fn jacobian(&self, b: usize, x: &LftMatrix) -> LftMatrix {
        let cols: Vec<LftMatrix> = (0..self.coords.len())
            .map(|k| self.jacobian_column(k, b, x))
            .collect();
        LftMatrix::hstack_all(&cols).reduce()
    }

    /// `p` proximal to (or equal to) `d`, both rotational.
    fn proximal(&self, p: usize, d: usize) -> bool {
        let t = &self.geo().tree;
        match (self.coords[p], self.coords[d]) {
            (Coord::Rot(i), Coord::Rot(j)) => i <= j,
            (Coord::Rot(_), Coord::Joint(_)) => true,
            (Coord::Joint(a), Coord::Joint(b)) => t.in_subtree(t.conn_child[a], t.conn_child[b]),
            _ => false,
        }
    }
}

fn maybe_reduce(m: LftMatrix, opts: AssemblyOptions) -> LftMatrix {
    if opts.reduce {
        m.reduce()
    } else {
        m
    }
}

/// Output body Euler rate maps must not depend on parameters.
fn constant_gamma_inverse(model: &MultibodyModel, geo: &Geometry, b: usize) -> Result<M3> {
    let nominal = model.params.nominal_point();
    let g0 = euler_rate_map(&euler_from_matrix(&m3_from_dyn(&geo.rotation[b].evaluate(&nominal)?))?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a11);
    for _ in 0..8 {
        let p = model.params.random_point(&mut rng);
        let g = euler_rate_map(&euler_from_matrix(&m3_from_dyn(&geo.rotation[b].evaluate(&p)?))?)?;
        if (g - g0).abs().max() > 1e-9 {
            return Err(Error::model(format!(
                "Euler output on body `{}` needs an Euler rate map independent of the parameters",
                model.bodies[b].name
            )));
        }
    }
    g0.try_inverse().ok_or(Error::GimbalLock { cos_pitch: 0.0 })
}

pub fn step3_linearize(
    model: &MultibodyModel,
    sol: &EquilibriumSolution,
    opts: AssemblyOptions,
) -> Result<LinearLftModel> {
    let geo = &sol.geometry;
    let tree = &geo.tree;
    let coords = coordinates(model, tree);
    let n = coords.len();
    if n == 0 {
        return Err(Error::model("model has no degrees of freedom"));
    }
    let kin = Kin {
        sol,
        coords: coords.clone(),
    };
    let params = &model.params;

    // mass matrix
    let mut m = LftMatrix::zeros(n, n);
    for &b in &tree.order {
        let body = &model.bodies[b];
        let s = kin.jacobian(b, &geo.cog[b]);
        let mut j = body.inertia_lft(params)?;
        if let Some(ci) = tree.incoming[b] {
            if let Some(joint) = model.revolute(ci) {
                let ra = joint.axis_child();
                j = j.add(&LftMatrix::constant(to_dyn(&(ra * ra.transpose() * joint.shaft_inertia))));
            }
        }
        let r = &geo.rotation[b];
        let j_inertial = maybe_reduce(r.mul(&j).mul(&r.transpose()), opts);
        let mass = body.mass_lft(params)?.scalar_times(&Mat::identity(3, 3));
        let d = mass.block_diag(&j_inertial);
        m = maybe_reduce(m.add(&s.transpose().mul(&d).mul(&s)), opts);
    }

    // stiffness: Hessian of the potential over the chart
    let mut h_vec: Vec<Option<LftMatrix>> = vec![None; n];
    for d in 0..n {
        if let Some((u, c)) = kin.rot(d) {
            let agg = match coords[d] {
                Coord::Rot(_) => &sol.subtree_agg[tree.root_body.expect("free root")],
                Coord::Joint(ci) => &sol.subtree_agg[tree.conn_child[ci]],
                Coord::Trans(_) => unreachable!(),
            };
            h_vec[d] = Some(agg.hessian_vector(&c, &u));
        }
    }
    let mut rows: Vec<Vec<LftMatrix>> = vec![vec![LftMatrix::zeros(1, 1); n]; n];
    for d in 0..n {
        let Some(h) = &h_vec[d] else { continue };
        for p in 0..n {
            if kin.rot(p).is_none() || !kin.proximal(p, d) {
                continue;
            }
            let (up, _) = kin.rot(p).expect("rotational");
            let e = dot(&up, h);
            rows[p][d] = e.clone();
            rows[d][p] = e;
        }
    }
    let k = maybe_reduce(LftMatrix::from_blocks(&rows), opts);

    // damping
    let mut cd = Mat::zeros(n, n);
    for (i, c) in coords.iter().enumerate() {
        cd[(i, i)] = match (c, &model.root) {
            (Coord::Trans(t), Root::Body { damping, .. }) => damping[*t],
            (Coord::Rot(t), Root::Body { damping, .. }) => damping[3 + *t],
            (Coord::Joint(ci), _) => model.revolute(*ci).expect("revolute").friction,
            _ => 0.0,
        };
    }

    // root Euler map: state positions -> chart coordinates
    let mut tq = Mat::identity(n, n);
    let mut t_rate = Mat::identity(n, n);
    if let Root::Body { euler, .. } = &model.root {
        let rot: Vec<usize> = coords
            .iter()
            .enumerate()
            .filter_map(|(i, c)| matches!(c, Coord::Rot(_)).then_some(i))
            .collect();
        let axes: Vec<usize> = coords
            .iter()
            .filter_map(|c| if let Coord::Rot(a) = c { Some(*a) } else { None })
            .collect();
        if !rot.is_empty() {
            let gamma = euler_rate_map(&crate::spatial::EulerState::from_vec(*euler))?;
            for i in 0..3 {
                for j in 0..3 {
                    if axes.contains(&i) != axes.contains(&j) && gamma[(i, j)].abs() > 1e-12 {
                        return Err(Error::model(
                            "root DOF mask couples kept and removed rotations at the equilibrium attitude",
                        ));
                    }
                }
            }
            let g = Mat::from_fn(rot.len(), rot.len(), |r, c| gamma[(axes[r], axes[c])]);
            let gi = g
                .clone()
                .try_inverse()
                .ok_or(Error::GimbalLock { cos_pitch: euler.y.cos() })?;
            for (r, &ri) in rot.iter().enumerate() {
                for (c, &ci) in rot.iter().enumerate() {
                    tq[(ri, ci)] = g[(r, c)];
                    t_rate[(ri, ci)] = gi[(r, c)];
                }
            }
        }
    }

    // inputs
    let mut bin_cols = Vec::new();
    for inp in &model.inputs {
        let col = match &inp.kind {
            InputKind::JointTorque { joint } => {
                let ci = model.connection_index(joint)?;
                let idx = coords
                    .iter()
                    .position(|c| *c == Coord::Joint(ci))
                    .ok_or_else(|| Error::model(format!("input `{}`: `{joint}` is not a revolute joint", inp.name)))?;
                let mut e = Mat::zeros(n, 1);
                e[(idx, 0)] = 1.0;
                LftMatrix::constant(e)
            }
            InputKind::Force { body, port, direction } => {
                let b = model.body_index(body)?;
                let x = geo.port_point(model, b, port)?;
                let f = geo.rotation[b].mul(&c3(direction)).vstack(&LftMatrix::zeros(3, 1));
                kin.jacobian(b, &x).transpose().mul(&f).reduce()
            }
            InputKind::Torque { body, axis } => {
                let b = model.body_index(body)?;
                let t = LftMatrix::zeros(3, 1).vstack(&geo.rotation[b].mul(&c3(axis)));
                kin.jacobian(b, &geo.cog[b]).transpose().mul(&t).reduce()
            }
        };
        bin_cols.push(col);
    }
    let nu = bin_cols.len();
    let bin = if nu == 0 {
        LftMatrix::zeros(n, 0)
    } else {
        LftMatrix::hstack_all(&bin_cols)
    };

    // A and B share M^-1
    let minv = maybe_reduce(m.inv()?, opts);
    let rhs = LftMatrix::constant(-cd.clone())
        .hstack(&k.mul_const_right(&tq).neg())
        .hstack(&bin);
    let top = maybe_reduce(minv.mul(&rhs), opts);
    let a_bottom = LftMatrix::constant(crate::lft::hcat(&t_rate, &Mat::zeros(n, n)));
    let a = top.block(0, 0, n, 2 * n).vstack(&a_bottom);
    let b = top.block(0, 2 * n, n, nu).vstack(&LftMatrix::zeros(n, nu));

    // outputs
    let mut c_rows = Vec::new();
    for out in &model.outputs {
        let row = output_row(model, &kin, &tq, out)?;
        c_rows.push(row);
    }
    let ny = c_rows.len();
    let c = if ny == 0 {
        LftMatrix::zeros(0, 2 * n)
    } else {
        LftMatrix::vstack_all(&c_rows)
    };
    let d = LftMatrix::zeros(ny, nu);

    let system = LftStateSpace::from_blocks(&a, &b, &c, &d);
    let occurrences_before = system.system.occurrences();
    let system = if opts.reduce { system.reduce() } else { system };
    let equilibrium = equilibrium_report(model, sol, &model.params.nominal_point())?;
    Ok(LinearLftModel {
        name: model.name.clone(),
        system,
        states: state_names(model, &coords),
        inputs: model.inputs.iter().map(|i| i.name.clone()).collect(),
        outputs: model.outputs.iter().map(|o| o.name.clone()).collect(),
        params: model.params.clone(),
        occurrences_before,
        equilibrium,
    })
}

fn output_row(model: &MultibodyModel, kin: &Kin<'_>, tq: &Mat, out: &Output) -> Result<LftMatrix> {
    let n = kin.coords.len();
    let geo = kin.geo();
    let unit = |i: usize, len: usize| {
        let mut e = Mat::zeros(1, len);
        e[(0, i)] = 1.0;
        e
    };
    let joint_idx = |joint: &str| -> Result<usize> {
        let ci = model.connection_index(joint)?;
        kin.coords
            .iter()
            .position(|c| *c == Coord::Joint(ci))
            .ok_or_else(|| Error::model(format!("output `{}`: `{joint}` is not a revolute joint", out.name)))
    };
    // velocity-level row (1 x n) to full-state rows
    let place = |row: LftMatrix, rate: bool| -> LftMatrix {
        if rate {
            row.hstack(&LftMatrix::zeros(1, n))
        } else {
            LftMatrix::zeros(1, n).hstack(&row.mul_const_right(tq))
        }
    };
    Ok(match &out.kind {
        OutputKind::JointAngle { joint } => LftMatrix::constant(unit(n + joint_idx(joint)?, 2 * n)),
        OutputKind::JointRate { joint } => LftMatrix::constant(unit(joint_idx(joint)?, 2 * n)),
        OutputKind::EulerAngle { body, index } | OutputKind::EulerRate { body, index } => {
            if *index > 2 {
                return Err(Error::model(format!("output `{}`: Euler index must be 0, 1 or 2", out.name)));
            }
            let b = model.body_index(body)?;
            let gi = constant_gamma_inverse(model, geo, b)?;
            let jac = kin.jacobian(b, &geo.cog[b]).block(3, 0, 3, n);
            let sel = to_dyn(&gi).rows(*index, 1).into_owned();
            let row = geo.rotation[b]
                .transpose()
                .mul(&jac)
                .mul_const_left(&sel)
                .reduce();
            place(row, matches!(out.kind, OutputKind::EulerRate { .. }))
        }
        OutputKind::Position { body, port, index } | OutputKind::Velocity { body, port, index } => {
            if *index > 2 {
                return Err(Error::model(format!("output `{}`: position index must be 0, 1 or 2", out.name)));
            }
            let b = model.body_index(body)?;
            let x = geo.port_point(model, b, port)?;
            let row = kin.jacobian(b, &x).select_rows(&[*index]).reduce();
            place(row, matches!(out.kind, OutputKind::Velocity { .. }))
        }
    }
    .reduce())
}

/// Steps 1 to 3.
pub fn assemble(model: &MultibodyModel, opts: AssemblyOptions) -> Result<LinearLftModel> {
    let geo = step1_geometry(model)?;
    let sol = step2_wrenches(model, geo)?;
    step3_linearize(model, &sol, opts)
}

/// Numeric state-space model at a point.
pub fn sample_model(lm: &LinearLftModel, point: &Point, mode: BoundsMode) -> Result<StateSpace> {
    for p in lm.system.system.params() {
        if !point.contains_key(&p.name) {
            return Err(Error::MissingParam(p.name.clone()));
        }
    }
    lm.system.evaluate_with(point, mode)
}

// ---- modes ------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub re: f64,
    pub im: f64,
    pub freq_hz: f64,
    pub damping: f64,
}

/// Relative threshold under which a row or column of `A` counts as zero.
pub const DEFLATION_TOL: f64 = 1e-12;

/// Eigenvalues of `A` with frequency and damping, sorted by `|Im|`.
pub fn modes(a: &Mat) -> Vec<Mode> {
    assert_eq!(a.nrows(), a.ncols(), "modes needs a square matrix");
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let tol = DEFLATION_TOL * scale;
    let mut keep: Vec<usize> = (0..a.nrows()).collect();
    let mut zeros = 0usize;
    loop {
        let pos = keep.iter().position(|&i| {
            keep.iter().all(|&j| a[(j, i)].abs() <= tol) || keep.iter().all(|&j| a[(i, j)].abs() <= tol)
        });
        match pos {
            Some(p) => {
                keep.remove(p);
                zeros += 1;
            }
            None => break,
        }
    }
    let mut out: Vec<Mode> = (0..zeros).map(|_| mode_of(0.0, 0.0)).collect();
    if !keep.is_empty() {
        let sub = Mat::from_fn(keep.len(), keep.len(), |i, j| a[(keep[i], keep[j])]);
        for l in sub.complex_eigenvalues().iter() {
            out.push(mode_of(l.re, l.im));
        }
    }
    out.sort_by(|x, y| {
        x.im.abs()
            .total_cmp(&y.im.abs())
            .then(x.re.total_cmp(&y.re))
            .then(x.im.total_cmp(&y.im))
    });
    out
}

fn mode_of(re: f64, im: f64) -> Mode {
    let mag = (re * re + im * im).sqrt();
    Mode {
        re,
        im,
        freq_hz: mag / (2.0 * std::f64::consts::PI),
        damping: if mag == 0.0 { 1.0 } else { -re / mag + 0.0 },
    }
}

/// Numeric position of a port, for reports and tests.
pub fn port_position_at(model: &MultibodyModel, geo: &Geometry, body: &str, port: &str, point: &Point) -> Result<V3> {
    let b = model.body_index(body)?;
    Ok(v3_from_dyn(&geo.port_point(model, b, port)?.evaluate(point)?))
}
