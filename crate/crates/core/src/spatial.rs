//! Frames, spatial 6-vectors, kinematic transport, direction cosine matrices
//! and the Euler-angle maps, with LFT counterparts where parameters enter.
//!
//! Spatial vectors stack `[linear; angular]`. The Euler sequence is intrinsic
//! x-y-z: `P_b/i = Rx(phi) Ry(theta) Rz(psi)` and `[X]_Ri = P_b/i [X]_Rb`.

use nalgebra::{Matrix3, Matrix6, Matrix6x3, SMatrix, SVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lft::{HalfTanParam, LftMatrix, Mat};

pub type V3 = Vector3<f64>;
pub type M3 = Matrix3<f64>;
pub type V6 = Vector6<f64>;
pub type M6 = Matrix6<f64>;
pub type V18 = SVector<f64, 18>;
pub type M18 = SMatrix<f64, 18, 18>;

/// Pitch cosine below which Euler angles are considered singular.
pub const GIMBAL_TOL: f64 = 1e-8;

pub fn skew(u: &V3) -> M3 {
    Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

/// `diag(P, P)`.
pub fn double(p: &M3) -> M6 {
    let mut out = M6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(p);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(p);
    out
}

pub fn to_dyn<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> Mat {
    Mat::from_fn(R, C, |i, j| m[(i, j)])
}

pub fn m3_from_dyn(m: &Mat) -> M3 {
    assert_eq!(m.shape(), (3, 3));
    M3::from_fn(|i, j| m[(i, j)])
}

pub fn v3_from_dyn(m: &Mat) -> V3 {
    assert_eq!(m.shape(), (3, 1));
    V3::new(m[(0, 0)], m[(1, 0)], m[(2, 0)])
}

// ---- spatial vectors -------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Position (m) and Euler angles (rad).
    Pose,
    Velocity,
    Acceleration,
    Wrench,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialVector {
    pub linear: V3,
    pub angular: V3,
    pub role: Role,
}

impl SpatialVector {
    pub fn new(role: Role, linear: V3, angular: V3) -> Self {
        SpatialVector { linear, angular, role }
    }

    pub fn zero(role: Role) -> Self {
        Self::new(role, V3::zeros(), V3::zeros())
    }

    pub fn from_vec6(role: Role, v: &V6) -> Self {
        Self::new(role, v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
    }

    pub fn as_vec6(&self) -> V6 {
        let mut v = V6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.linear);
        v.fixed_rows_mut::<3>(3).copy_from(&self.angular);
        v
    }

    fn expect(&self, role: Role) -> Result<()> {
        if self.role == role {
            Ok(())
        } else {
            Err(Error::RoleMismatch {
                expected: format!("{role:?}"),
                got: format!("{:?}", self.role),
            })
        }
    }
}

/// Acceleration, velocity and pose of one point: 18 entries `x'', x', x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionVector {
    pub acc: SpatialVector,
    pub vel: SpatialVector,
    pub pose: SpatialVector,
}

impl MotionVector {
    pub fn new(acc: V6, vel: V6, pose: V6) -> Self {
        MotionVector {
            acc: SpatialVector::from_vec6(Role::Acceleration, &acc),
            vel: SpatialVector::from_vec6(Role::Velocity, &vel),
            pose: SpatialVector::from_vec6(Role::Pose, &pose),
        }
    }

    pub fn zero() -> Self {
        Self::new(V6::zeros(), V6::zeros(), V6::zeros())
    }

    pub fn as_vec18(&self) -> V18 {
        let mut v = V18::zeros();
        v.fixed_rows_mut::<6>(0).copy_from(&self.acc.as_vec6());
        v.fixed_rows_mut::<6>(6).copy_from(&self.vel.as_vec6());
        v.fixed_rows_mut::<6>(12).copy_from(&self.pose.as_vec6());
        v
    }

    pub fn from_vec18(v: &V18) -> Self {
        Self::new(
            v.fixed_rows::<6>(0).into(),
            v.fixed_rows::<6>(6).into(),
            v.fixed_rows::<6>(12).into(),
        )
    }
}

// ---- kinematic transport ---------------------------------------------------

/// Transport between two points of one body; `offset` is the vector PC.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KinematicTransport {
    pub offset: V3,
}

impl KinematicTransport {
    /// Transport from C to P given the vector PC.
    pub fn new(pc: V3) -> Self {
        KinematicTransport { offset: pc }
    }

    /// Transport between points with positions `p` and `c`.
    pub fn between(p: &V3, c: &V3) -> Self {
        Self::new(c - p)
    }

    /// `[I, skew(PC); 0, I]`.
    pub fn matrix(&self) -> M6 {
        tau(&self.offset)
    }

    /// The reverse transport, with offset CP.
    pub fn inverse(&self) -> Self {
        Self::new(-self.offset)
    }

    /// `tau_PC * tau_CP' = tau_PP'`.
    pub fn then(&self, next: &KinematicTransport) -> Self {
        Self::new(self.offset + next.offset)
    }
}

pub fn tau(pc: &V3) -> M6 {
    let mut t = M6::identity();
    t.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(pc));
    t
}

/// `x'_P = tau_PC x'_C`.
pub fn transport_velocity(x: &SpatialVector, t: &KinematicTransport) -> Result<SpatialVector> {
    x.expect(Role::Velocity)?;
    Ok(SpatialVector::from_vec6(Role::Velocity, &(t.matrix() * x.as_vec6())))
}

/// `W_C = tau_PC^T W_P`.
pub fn transport_wrench(w: &SpatialVector, t: &KinematicTransport) -> Result<SpatialVector> {
    w.expect(Role::Wrench)?;
    Ok(SpatialVector::from_vec6(Role::Wrench, &(t.matrix().transpose() * w.as_vec6())))
}

/// Full transport of the motion vector from C to P, `omega` the body rate.
pub fn transport_motion_nonlinear(m: &MotionVector, t: &KinematicTransport, omega: &V3) -> MotionVector {
    let tm = t.matrix();
    let pc = t.offset;
    let mut acc = tm * m.acc.as_vec6();
    let centripetal = skew(omega) * skew(&pc) * omega;
    let mut lin = acc.fixed_rows_mut::<3>(0);
    lin += centripetal;
    let vel = tm * m.vel.as_vec6();
    let mut pose = m.pose.as_vec6();
    let mut pos = pose.fixed_rows_mut::<3>(0);
    pos -= pc;
    MotionVector::new(acc, vel, pose)
}

/// `diag(tau_PC, tau_PC, I6)`.
pub fn upsilon(t: &KinematicTransport) -> M18 {
    let mut u = M18::identity();
    let tm = t.matrix();
    u.fixed_view_mut::<6, 6>(0, 0).copy_from(&tm);
    u.fixed_view_mut::<6, 6>(6, 6).copy_from(&tm);
    u
}

/// First-order transport of motion variations around a zero-velocity state.
pub fn transport_motion_linearized(dm: &MotionVector, t: &KinematicTransport) -> MotionVector {
    MotionVector::from_vec18(&(upsilon(t) * dm.as_vec18()))
}

// ---- DCMs and Euler angles -------------------------------------------------

/// A rotation `[X]_to = matrix [X]_from`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dcm {
    pub matrix: M3,
    pub from_frame: String,
    pub to_frame: String,
}

impl Dcm {
    pub fn new(matrix: M3, from_frame: impl Into<String>, to_frame: impl Into<String>) -> Self {
        Dcm {
            matrix,
            from_frame: from_frame.into(),
            to_frame: to_frame.into(),
        }
    }

    pub fn identity(from_frame: impl Into<String>, to_frame: impl Into<String>) -> Self {
        Self::new(M3::identity(), from_frame, to_frame)
    }

    /// Inverse rotation (the transpose).
    pub fn inverse(&self) -> Dcm {
        Dcm::new(self.matrix.transpose(), self.to_frame.clone(), self.from_frame.clone())
    }

    /// `self * inner`: `P_b/i * P_a/b = P_a/i`.
    pub fn compose(&self, inner: &Dcm) -> Result<Dcm> {
        if inner.to_frame != self.from_frame {
            return Err(Error::FrameMismatch {
                expected: self.from_frame.clone(),
                got: inner.to_frame.clone(),
            });
        }
        Ok(Dcm::new(
            self.matrix * inner.matrix,
            inner.from_frame.clone(),
            self.to_frame.clone(),
        ))
    }

    pub fn orthonormality_error(&self) -> f64 {
        (self.matrix.transpose() * self.matrix - M3::identity()).abs().max()
    }
}

pub fn rot_x(a: f64) -> M3 {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> M3 {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> M3 {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation by `angle` about the unit vector `axis`.
pub fn axis_rotation(axis: &V3, angle: f64) -> M3 {
    let k = skew(axis);
    M3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EulerSequence {
    #[default]
    #[serde(rename = "xyz-intrinsic")]
    XyzIntrinsic,
}

impl EulerSequence {
    pub fn tag(self) -> &'static str {
        "xyz-intrinsic"
    }
}

/// Roll, pitch, yaw of a body frame relative to the reference frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerState {
    pub angles: V3,
    pub sequence: EulerSequence,
}

impl EulerState {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        EulerState {
            angles: V3::new(roll, pitch, yaw),
            sequence: EulerSequence::XyzIntrinsic,
        }
    }

    pub fn from_vec(v: V3) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    fn check_pitch(&self) -> Result<()> {
        let c = self.angles.y.cos();
        if c.abs() < GIMBAL_TOL {
            return Err(Error::GimbalLock { cos_pitch: c });
        }
        Ok(())
    }
}

/// `P_b/i` as a matrix.
pub fn euler_matrix(angles: &V3) -> M3 {
    rot_x(angles.x) * rot_y(angles.y) * rot_z(angles.z)
}

/// `P_b/i` from body frame `body` to reference frame `reference`.
pub fn dcm_from_euler(e: &EulerState) -> Dcm {
    Dcm::new(euler_matrix(&e.angles), "body", "reference")
}

/// Euler angles of an orthonormal matrix, roll and yaw in (-pi, pi].
pub fn euler_from_matrix(p: &M3) -> Result<EulerState> {
    let pitch = p[(0, 2)].clamp(-1.0, 1.0).asin();
    let e = EulerState::new(
        (-p[(1, 2)]).atan2(p[(2, 2)]),
        pitch,
        (-p[(0, 1)]).atan2(p[(0, 0)]),
    );
    let cp = (p[(0, 0)].powi(2) + p[(0, 1)].powi(2)).sqrt();
    if cp < GIMBAL_TOL {
        return Err(Error::GimbalLock { cos_pitch: cp });
    }
    Ok(e)
}

pub fn euler_from_dcm(d: &Dcm) -> Result<EulerState> {
    let err = d.orthonormality_error();
    if err > 1e-8 {
        return Err(Error::model(format!(
            "DCM {} -> {} is not orthonormal (error {err:.3e})",
            d.from_frame, d.to_frame
        )));
    }
    euler_from_matrix(&d.matrix)
}

/// `Gamma` with `[omega]_Rb = Gamma(theta) d(theta)/dt`.
pub fn euler_rate_map(e: &EulerState) -> Result<M3> {
    e.check_pitch()?;
    Ok(euler_rate_map_unchecked(&e.angles))
}

pub(crate) fn euler_rate_map_unchecked(a: &V3) -> M3 {
    let rz_t = rot_z(a.z).transpose();
    let ry_t = rot_y(a.y).transpose();
    let c1 = rz_t * ry_t * V3::x();
    let c2 = rz_t * V3::y();
    M3::from_columns(&[c1, c2, V3::z()])
}

/// `[a6]_Rb = [P_b/i^T a; 0]` and its derivative with respect to the Euler angles.
pub fn accel_projection_and_derivative(a_inertial: &V3, e: &EulerState) -> (V6, Matrix6x3<f64>) {
    let (rx, ry, rz) = (rot_x(e.angles.x), rot_y(e.angles.y), rot_z(e.angles.z));
    let p = rx * ry * rz;
    let a_b = p.transpose() * a_inertial;
    // dR/da = R skew(axis) for every elementary rotation
    let dp = [
        rx * skew(&V3::x()) * ry * rz,
        rx * ry * skew(&V3::y()) * rz,
        rx * ry * rz * skew(&V3::z()),
    ];
    let mut a6 = V6::zeros();
    a6.fixed_rows_mut::<3>(0).copy_from(&a_b);
    let mut d = Matrix6x3::zeros();
    for (k, dpk) in dp.iter().enumerate() {
        d.fixed_view_mut::<3, 1>(0, k).copy_from(&(dpk.transpose() * a_inertial));
    }
    (a6, d)
}

// ---- change of frame -------------------------------------------------------

/// A value tagged with the frame its components are expressed in.
#[derive(Clone, Debug, PartialEq)]
pub struct InFrame<T> {
    pub frame: String,
    pub value: T,
}

impl<T> InFrame<T> {
    pub fn new(frame: impl Into<String>, value: T) -> Self {
        InFrame { frame: frame.into(), value }
    }
}

pub trait ChangeFrame: Sized {
    fn rotated(&self, p: &M3) -> Self;
}

impl ChangeFrame for SpatialVector {
    fn rotated(&self, p: &M3) -> Self {
        SpatialVector::new(self.role, p * self.linear, p * self.angular)
    }
}

impl ChangeFrame for MotionVector {
    /// `diag(P, P, P, P, P, I3)`: Euler angles are frame-independent.
    fn rotated(&self, p: &M3) -> Self {
        let pose = SpatialVector::new(Role::Pose, p * self.pose.linear, self.pose.angular);
        MotionVector {
            acc: self.acc.rotated(p),
            vel: self.vel.rotated(p),
            pose,
        }
    }
}

impl ChangeFrame for M6 {
    /// Congruence `P2 D P2^T` of a direct-dynamics matrix.
    fn rotated(&self, p: &M3) -> Self {
        let p2 = double(p);
        p2 * self * p2.transpose()
    }
}

/// Re-express `x` through `d`, which must map from `x`'s frame.
pub fn change_frame<T: ChangeFrame>(x: &InFrame<T>, d: &Dcm) -> Result<InFrame<T>> {
    if x.frame != d.from_frame {
        return Err(Error::FrameMismatch {
            expected: d.from_frame.clone(),
            got: x.frame.clone(),
        });
    }
    Ok(InFrame::new(d.to_frame.clone(), x.value.rotated(&d.matrix)))
}

/// `diag(P2, P2, P, I3)`.
pub fn p18(p: &M3) -> M18 {
    let mut out = M18::identity();
    for k in 0..4 {
        out.fixed_view_mut::<3, 3>(3 * k, 3 * k).copy_from(p);
    }
    out.fixed_view_mut::<3, 3>(12, 12).copy_from(p);
    out.fixed_view_mut::<3, 3>(15, 15).copy_from(&M3::identity());
    out
}

// ---- LFT counterparts ------------------------------------------------------

fn skew_basis() -> Mat {
    // [S1 S2 S3], S_k = skew(e_k)
    let mut out = Mat::zeros(3, 9);
    for k in 0..3 {
        let s = skew(&V3::from_fn(|i, _| if i == k { 1.0 } else { 0.0 }));
        out.view_mut((0, 3 * k), (3, 3)).copy_from(&to_dyn(&s));
    }
    out
}

/// `skew(u)` for a 3x1 LFT `u`.
pub fn skew_lft(u: &LftMatrix) -> LftMatrix {
    assert_eq!(u.shape(), (3, 1), "skew_lft needs a 3x1 LFT");
    if u.is_constant() {
        return LftMatrix::constant(to_dyn(&skew(&v3_from_dyn(&u.nominal()))));
    }
    u.kron_identity(3).mul_const_left(&skew_basis()).reduce()
}

/// `[I, skew(PC); 0, I]` for a 3x1 LFT offset.
pub fn transport_lft(pc: &LftMatrix) -> LftMatrix {
    let i3 = LftMatrix::identity(3);
    let z3 = LftMatrix::zeros(3, 3);
    LftMatrix::from_blocks(&[vec![i3.clone(), skew_lft(pc)], vec![z3, i3]])
}

/// `diag(P, P)` for a 3x3 LFT.
pub fn double_lft(p: &LftMatrix) -> LftMatrix {
    p.block_diag(p)
}

/// Orthonormal `[e1, e2]` spanning the plane normal to the unit `r`, with `e1 x e2 = r`.
pub fn normal_basis(r: &V3) -> (V3, V3) {
    let trial = if r.x.abs() < 0.9 { V3::x() } else { V3::y() };
    let e1 = (trial - r * r.dot(&trial)).normalize();
    let e2 = r.cross(&e1);
    (e1, e2)
}

/// `Rot(r, theta) = r r^T + E R2(theta) E^T` with the angle through a tangent parameter.
pub fn axis_rotation_lft(axis: &V3, t: &HalfTanParam) -> Result<LftMatrix> {
    let r = axis.normalize();
    let (e1, e2) = normal_basis(&r);
    let e = Mat::from_fn(3, 2, |i, j| if j == 0 { e1[i] } else { e2[i] });
    let r2 = crate::lft::rotation_lft(t)?;
    let rrt = to_dyn(&(r * r.transpose()));
    Ok(r2
        .mul_const_left(&e)
        .mul_const_right(&e.transpose())
        .add(&LftMatrix::constant(rrt)))
}
