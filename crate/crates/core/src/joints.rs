//! Rigid connections and revolute joints: nonlinear relations, equilibrium
//! relations and numeric linearized blocks.
//!
//! `P_a/b` maps child-frame components to parent-frame components. A revolute
//! joint rotates about `axis`, given in the parent frame:
//! `P_a/b(theta) = Rot(axis, theta) P_a/b(0)`.

use crate::error::{Error, Result};
use crate::lft::{HalfTanParam, LftMatrix, Mat, ParamSet, Point};
use crate::spatial::{
    axis_rotation, axis_rotation_lft, double, euler_from_matrix, euler_matrix, euler_rate_map, skew,
    to_dyn, EulerState, MotionVector, M3, M6, V3, V6,
};
use crate::ss::StateSpace;

pub const DEFAULT_SHAFT_INERTIA: f64 = 1e-10;

/// One side of a connection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Ground,
    Port { body: String, port: String },
}

impl Endpoint {
    pub fn port(body: impl Into<String>, port: impl Into<String>) -> Self {
        Endpoint::Port {
            body: body.into(),
            port: port.into(),
        }
    }

    pub fn body(&self) -> Option<&str> {
        match self {
            Endpoint::Ground => None,
            Endpoint::Port { body, .. } => Some(body),
        }
    }

    pub fn port_name(&self) -> Option<&str> {
        match self {
            Endpoint::Ground => None,
            Endpoint::Port { port, .. } => Some(port),
        }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Ground => f.write_str("ground"),
            Endpoint::Port { body, port } => write!(f, "{body}.{port}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RigidConnection {
    pub name: String,
    pub parent: Endpoint,
    pub child: Endpoint,
    /// Constant `P_a/b`.
    pub dcm: M3,
}

#[derive(Clone, Debug, PartialEq)]
pub enum JointAngle {
    Fixed(f64),
    Param(HalfTanParam),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RevoluteJoint {
    pub name: String,
    pub parent: Endpoint,
    pub child: Endpoint,
    /// Unit axis in the parent frame.
    pub axis: V3,
    pub shaft_inertia: f64,
    /// Equilibrium angle.
    pub angle: JointAngle,
    /// `P_a/b(0)`.
    pub zero_dcm: M3,
    /// Viscous friction `C_m = -K_J theta'`.
    pub friction: f64,
}

impl RevoluteJoint {
    pub fn new(name: impl Into<String>, parent: Endpoint, child: Endpoint, axis: V3, angle: JointAngle) -> Self {
        RevoluteJoint {
            name: name.into(),
            parent,
            child,
            axis,
            shaft_inertia: DEFAULT_SHAFT_INERTIA,
            angle,
            zero_dcm: M3::identity(),
            friction: 0.0,
        }
    }

    pub fn with_shaft_inertia(mut self, j: f64) -> Self {
        self.shaft_inertia = j;
        self
    }

    pub fn with_friction(mut self, k: f64) -> Self {
        self.friction = k;
        self
    }

    pub fn with_zero_dcm(mut self, p0: M3) -> Self {
        self.zero_dcm = p0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if (self.axis.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::model(format!("joint `{}`: axis is not a unit vector", self.name)));
        }
        if self.shaft_inertia <= 0.0 || !self.shaft_inertia.is_finite() {
            return Err(Error::model(format!(
                "joint `{}`: shaft inertia must be positive",
                self.name
            )));
        }
        if self.friction < 0.0 {
            return Err(Error::model(format!("joint `{}`: negative friction", self.name)));
        }
        if (self.zero_dcm.transpose() * self.zero_dcm - M3::identity()).abs().max() > 1e-10 {
            return Err(Error::model(format!("joint `{}`: zero DCM is not orthonormal", self.name)));
        }
        Ok(())
    }

    /// Equilibrium angle at a parameter point (rad).
    pub fn angle_at(&self, point: &Point) -> Result<f64> {
        match &self.angle {
            JointAngle::Fixed(v) => Ok(*v),
            JointAngle::Param(h) => point
                .get(&h.t.name)
                .map(|&t| h.angle_of(t))
                .ok_or_else(|| Error::MissingParam(h.t.name.clone())),
        }
    }

    /// `P_a/b(theta)`.
    pub fn dcm(&self, theta: f64) -> M3 {
        axis_rotation(&self.axis, theta) * self.zero_dcm
    }

    /// `P_a/b` at the equilibrium angle as an LFT.
    pub fn dcm_lft(&self) -> Result<LftMatrix> {
        match &self.angle {
            JointAngle::Fixed(v) => Ok(LftMatrix::constant(to_dyn(&self.dcm(*v)))),
            JointAngle::Param(h) => Ok(axis_rotation_lft(&self.axis, h)?
                .mul_const_right(&to_dyn(&self.zero_dcm))
                .reduce()),
        }
    }

    /// Axis in the child frame, `P_a/b(0)^T r`.
    pub fn axis_child(&self) -> V3 {
        self.zero_dcm.transpose() * self.axis
    }

    pub fn angle_param(&self) -> Option<&HalfTanParam> {
        match &self.angle {
            JointAngle::Param(h) => Some(h),
            JointAngle::Fixed(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Connection {
    Rigid(RigidConnection),
    Revolute(RevoluteJoint),
}

impl Connection {
    pub fn name(&self) -> &str {
        match self {
            Connection::Rigid(c) => &c.name,
            Connection::Revolute(j) => &j.name,
        }
    }

    pub fn parent(&self) -> &Endpoint {
        match self {
            Connection::Rigid(c) => &c.parent,
            Connection::Revolute(j) => &j.parent,
        }
    }

    pub fn child(&self) -> &Endpoint {
        match self {
            Connection::Rigid(c) => &c.child,
            Connection::Revolute(j) => &j.child,
        }
    }

    /// `P_a/b` at equilibrium as an LFT.
    pub fn dcm_lft(&self) -> Result<LftMatrix> {
        match self {
            Connection::Rigid(c) => Ok(LftMatrix::constant(to_dyn(&c.dcm))),
            Connection::Revolute(j) => j.dcm_lft(),
        }
    }

    /// `P_a/b` at equilibrium for a parameter point.
    pub fn dcm_at(&self, point: &Point) -> Result<M3> {
        match self {
            Connection::Rigid(c) => Ok(c.dcm),
            Connection::Revolute(j) => Ok(j.dcm(j.angle_at(point)?)),
        }
    }

    pub fn validate(&self, params: &ParamSet) -> Result<()> {
        match self {
            Connection::Rigid(c) => {
                if (c.dcm.transpose() * c.dcm - M3::identity()).abs().max() > 1e-10
                    || (c.dcm.determinant() - 1.0).abs() > 1e-10
                {
                    return Err(Error::model(format!("connection `{}`: DCM is not a rotation", c.name)));
                }
                Ok(())
            }
            Connection::Revolute(j) => {
                j.validate()?;
                if let Some(h) = j.angle_param() {
                    if params.get(&h.t.name).is_none() {
                        return Err(Error::MissingParam(h.t.name.clone()));
                    }
                }
                Ok(())
            }
        }
    }
}

// ---- rigid connection ------------------------------------------------------

/// Child Euler angles `Theta(P_b/i(theta_B) P_a/b)`.
pub fn rigid_connection_equilibrium(conn: &RigidConnection, theta_b: &EulerState) -> Result<EulerState> {
    euler_from_matrix(&(euler_matrix(&theta_b.angles) * conn.dcm))
}

/// `dTheta_a/b / dtheta_B = Gamma_A^-1 P_a/b^T Gamma_B`.
pub fn rigid_angle_derivative(p_ab: &M3, theta_b: &EulerState) -> Result<M3> {
    let theta_a = euler_from_matrix(&(euler_matrix(&theta_b.angles) * p_ab))?;
    let ga = euler_rate_map(&theta_a)?;
    let gb = euler_rate_map(theta_b)?;
    let ga_inv = ga.try_inverse().ok_or(Error::GimbalLock {
        cos_pitch: theta_a.angles.y.cos(),
    })?;
    Ok(ga_inv * p_ab.transpose() * gb)
}

/// Linearized rigid connection: motion gain (18x18, parent frame to child
/// frame) and wrench gain (6x6, child frame to parent frame).
#[derive(Clone, Debug, PartialEq)]
pub struct RigidBlock {
    pub motion: Mat,
    pub wrench: Mat,
}

pub fn rigid_connection_block(conn: &RigidConnection, theta_b: &EulerState) -> Result<RigidBlock> {
    rigid_block_for(&conn.dcm, theta_b)
}

fn rigid_block_for(p: &M3, theta_b: &EulerState) -> Result<RigidBlock> {
    let dth = rigid_angle_derivative(p, theta_b)?;
    let pt = p.transpose();
    let mut motion = Mat::zeros(18, 18);
    for k in 0..5 {
        motion.view_mut((3 * k, 3 * k), (3, 3)).copy_from(&to_dyn(&pt));
    }
    motion.view_mut((15, 15), (3, 3)).copy_from(&to_dyn(&dth));
    Ok(RigidBlock {
        motion,
        wrench: to_dyn(&double(p)),
    })
}

// ---- revolute joint --------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct RevoluteEquilibrium {
    pub theta_a: EulerState,
    /// Equilibrium driving torque `-r6^T W_A/J`.
    pub cm: f64,
    /// `W_J/B = P2_a/b W_A/J`, parent frame.
    pub w_jb: V6,
}

fn r6(r: &V3) -> V6 {
    V6::new(0.0, 0.0, 0.0, r.x, r.y, r.z)
}

/// `w_aj`: wrench applied by the child on the joint at the joint point, child frame.
pub fn revolute_equilibrium(
    joint: &RevoluteJoint,
    theta_b: &EulerState,
    theta: f64,
    w_aj: &V6,
) -> Result<RevoluteEquilibrium> {
    let p = joint.dcm(theta);
    let theta_a = euler_from_matrix(&(euler_matrix(&theta_b.angles) * p))?;
    Ok(RevoluteEquilibrium {
        theta_a,
        cm: -r6(&joint.axis_child()).dot(w_aj),
        w_jb: double(&p) * w_aj,
    })
}

/// Prop. 5 transform. Vectors of `m_b` are in the parent frame and the result
/// in the child frame; the pose angles are Euler angles of the parent and
/// child bodies.
pub fn revolute_motion_transform_nonlinear(
    joint: &RevoluteJoint,
    m_b: &MotionVector,
    theta: f64,
    theta_d: f64,
    theta_dd: f64,
) -> Result<MotionVector> {
    let p = joint.dcm(theta);
    let pt2 = double(&p.transpose());
    let r = r6(&joint.axis);
    let acc = pt2 * (m_b.acc.as_vec6() + r * theta_dd);
    let vel = pt2 * (m_b.vel.as_vec6() + r * theta_d);
    let pos = p.transpose() * m_b.pose.linear;
    let ang = euler_from_matrix(&(euler_matrix(&m_b.pose.angular) * p))?.angles;
    let mut pose = V6::zeros();
    pose.fixed_rows_mut::<3>(0).copy_from(&pos);
    pose.fixed_rows_mut::<3>(3).copy_from(&ang);
    Ok(MotionVector::new(acc, vel, pose))
}

/// Index layout of the numeric revolute block.
pub mod revolute_io {
    /// Inputs: `[dC_m (1); dm_B (18, parent frame); dW_A/J (6, child frame)]`.
    pub const IN_CM: usize = 0;
    pub const IN_MB: usize = 1;
    pub const IN_W: usize = 19;
    pub const N_IN: usize = 25;
    /// Outputs: `[dm_A (18, child frame); dW_J/B (6, parent frame); dtheta'']`.
    pub const OUT_MA: usize = 0;
    pub const OUT_W: usize = 18;
    pub const OUT_THDD: usize = 24;
    pub const N_OUT: usize = 25;
}

/// Linearized revolute joint with states `[dtheta'; dtheta]`.
///
/// `w_aj` is the equilibrium wrench of the child on the joint (child frame),
/// `x_p` the equilibrium position of the joint point in the parent frame.
pub fn revolute_block(
    joint: &RevoluteJoint,
    theta_b: &EulerState,
    theta: f64,
    w_aj: &V6,
    x_p: &V3,
) -> Result<StateSpace> {
    use revolute_io::*;
    joint.validate()?;
    let jj = joint.shaft_inertia;
    let p = joint.dcm(theta);
    let pt = p.transpose();
    let rb = joint.axis;
    let ra = joint.axis_child();
    let theta_a = euler_from_matrix(&(euler_matrix(&theta_b.angles) * p))?;
    let ga_inv = euler_rate_map(&theta_a)?
        .try_inverse()
        .ok_or(Error::GimbalLock { cos_pitch: theta_a.angles.y.cos() })?;
    let gb = euler_rate_map(theta_b)?;

    // dtheta'' = thdd_x * x + thdd_u * u
    let mut thdd_x = Mat::zeros(1, 2);
    thdd_x[(0, 0)] = -joint.friction / jj;
    let mut thdd_u = Mat::zeros(1, N_IN);
    thdd_u[(0, IN_CM)] = 1.0 / jj;
    for k in 0..3 {
        thdd_u[(0, IN_W + 3 + k)] = ra[k] / jj;
        // angular acceleration of the parent, rows 3..6 of dm_B
        thdd_u[(0, IN_MB + 3 + k)] = -rb[k];
    }

    let mut a = Mat::zeros(2, 2);
    a.view_mut((0, 0), (1, 2)).copy_from(&thdd_x);
    a[(1, 0)] = 1.0;
    let mut b = Mat::zeros(2, N_IN);
    b.view_mut((0, 0), (1, N_IN)).copy_from(&thdd_u);

    let mut c = Mat::zeros(N_OUT, 2);
    let mut d = Mat::zeros(N_OUT, N_IN);
    let pt2 = to_dyn(&double(&pt));
    let r6b = to_dyn(&r6(&rb));
    // acceleration: Pt2 (dx''_B + r6 dtheta'')
    d.view_mut((OUT_MA, IN_MB), (6, 6)).copy_from(&pt2);
    let pr = &pt2 * &r6b;
    c.view_mut((OUT_MA, 0), (6, 2)).copy_from(&(&pr * &thdd_x));
    let add = &pr * &thdd_u;
    let mut blk = d.view_mut((OUT_MA, 0), (6, N_IN));
    blk += add;
    // velocity: Pt2 (dx'_B + r6 dtheta')
    d.view_mut((OUT_MA + 6, IN_MB + 6), (6, 6)).copy_from(&pt2);
    c.view_mut((OUT_MA + 6, 0), (6, 1)).copy_from(&pr);
    // position: Pt dx_B - Pt skew(r) x_P dtheta
    d.view_mut((OUT_MA + 12, IN_MB + 12), (3, 3)).copy_from(&to_dyn(&pt));
    c.view_mut((OUT_MA + 12, 1), (3, 1))
        .copy_from(&to_dyn(&(-pt * skew(&rb) * x_p)));
    // angles: Gamma_A^-1 (P^T Gamma_B dtheta_B + r_a dtheta)
    d.view_mut((OUT_MA + 15, IN_MB + 15), (3, 3))
        .copy_from(&to_dyn(&(ga_inv * pt * gb)));
    c.view_mut((OUT_MA + 15, 1), (3, 1)).copy_from(&to_dyn(&(ga_inv * ra)));
    // wrench: P2 dW + d(P2)/dtheta W dtheta
    d.view_mut((OUT_W, IN_W), (6, 6)).copy_from(&to_dyn(&double(&p)));
    let dp2 = double(&(skew(&rb) * p));
    c.view_mut((OUT_W, 1), (6, 1)).copy_from(&to_dyn(&(dp2 * w_aj)));
    // theta''
    c.view_mut((OUT_THDD, 0), (1, 2)).copy_from(&thdd_x);
    d.view_mut((OUT_THDD, 0), (1, N_IN)).copy_from(&thdd_u);
    Ok(StateSpace { a, b, c, d })
}

/// The stiffness gain `d(P2)/dtheta W` of the wrench path (6x1).
pub fn revolute_wrench_stiffness(joint: &RevoluteJoint, theta: f64, w_aj: &V6) -> V6 {
    double(&(skew(&joint.axis) * joint.dcm(theta))) * w_aj
}

/// Skew of a 6-vector axis acting on both halves: `diag(skew(r), skew(r))`.
pub fn skew6(r: &V3) -> M6 {
    double(&skew(r))
}
