//! Rigid bodies: Newton-Euler at a port, equilibrium wrench, and the
//! linearized forward and inverse dynamics blocks.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::lft::{lift_matrix, Expr, LftMatrix, Mat, ParamSet, Point};
use crate::spatial::{
    euler_rate_map, tau, to_dyn, transport_lft, EulerState, M3, M6, V3, V6,
};
use crate::ss::LftStateSpace;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DynamicsRole {
    /// Motion from wrenches; needs an invertible mass matrix on unmasked DOF.
    Forward,
    /// Wrenches from imposed motion.
    #[default]
    Inverse,
}

pub type ExprVec3 = [Expr; 3];

pub fn expr_vec(v: [f64; 3]) -> ExprVec3 {
    [Expr::c(v[0]), Expr::c(v[1]), Expr::c(v[2])]
}

pub fn eval_vec(v: &ExprVec3, point: &Point) -> Result<V3> {
    Ok(V3::new(v[0].eval(point)?, v[1].eval(point)?, v[2].eval(point)?))
}

pub fn lift_vec(v: &ExprVec3, params: &ParamSet) -> Result<LftMatrix> {
    lift_matrix(&[vec![v[0].clone()], vec![v[1].clone()], vec![v[2].clone()]], params)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Port {
    pub name: String,
    /// Position in the body frame, relative to the body origin.
    pub position: ExprVec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RigidBody {
    pub name: String,
    pub mass: Expr,
    /// Inertia at the CoG in the body frame, row-major.
    pub inertia: [[Expr; 3]; 3],
    /// CoG position in the body frame.
    pub cog: ExprVec3,
    pub ports: Vec<Port>,
    pub role: DynamicsRole,
    /// Kept DOF `[x, y, z, rx, ry, rz]`; only meaningful for the forward role.
    pub dof_mask: [bool; 6],
}

impl RigidBody {
    pub fn new(name: impl Into<String>, mass: Expr, inertia: [[Expr; 3]; 3], cog: ExprVec3) -> Self {
        RigidBody {
            name: name.into(),
            mass,
            inertia,
            cog,
            ports: Vec::new(),
            role: DynamicsRole::Inverse,
            dof_mask: [true; 6],
        }
    }

    pub fn point_mass(name: impl Into<String>, mass: Expr, at: ExprVec3) -> Self {
        let z = || Expr::c(0.0);
        Self::new(name, mass, [[z(), z(), z()], [z(), z(), z()], [z(), z(), z()]], at)
    }

    pub fn diagonal_inertia(j: [Expr; 3]) -> [[Expr; 3]; 3] {
        let [a, b, c] = j;
        let z = || Expr::c(0.0);
        [[a, z(), z()], [z(), b, z()], [z(), z(), c]]
    }

    pub fn with_port(mut self, name: impl Into<String>, position: ExprVec3) -> Self {
        self.ports.push(Port {
            name: name.into(),
            position,
        });
        self
    }

    pub fn with_role(mut self, role: DynamicsRole) -> Self {
        self.role = role;
        self
    }

    pub fn with_dof_mask(mut self, mask: [bool; 6]) -> Self {
        self.dof_mask = mask;
        self
    }

    pub fn port(&self, name: &str) -> Result<&Port> {
        self.ports.iter().find(|p| p.name == name).ok_or_else(|| {
            Error::model(format!("body `{}` has no port `{name}`", self.name))
        })
    }

    /// Names of all parameters referenced by the body.
    pub fn params(&self) -> BTreeSet<String> {
        let mut s = self.mass.params();
        for row in &self.inertia {
            for e in row {
                s.extend(e.params());
            }
        }
        for e in self.cog.iter().chain(self.ports.iter().flat_map(|p| p.position.iter())) {
            s.extend(e.params());
        }
        s
    }

    pub fn validate(&self, params: &ParamSet) -> Result<()> {
        for name in self.params() {
            if params.get(&name).is_none() {
                return Err(Error::MissingParam(format!("{name} (body `{}`)", self.name)));
            }
        }
        let mut seen = BTreeSet::new();
        for p in &self.ports {
            if !seen.insert(p.name.as_str()) {
                return Err(Error::model(format!(
                    "body `{}`: duplicate port `{}`",
                    self.name, p.name
                )));
            }
        }
        let nominal = params.nominal_point();
        for p in &self.ports {
            let x = eval_vec(&p.position, &nominal)?;
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::model(format!(
                    "body `{}`: port `{}` position is not finite",
                    self.name, p.name
                )));
            }
        }
        // mass positive (non-negative for inverse-role bodies) at nominal and at
        // the corners of its parameter box
        let forward = self.role == DynamicsRole::Forward;
        let mp: Vec<String> = self.mass.params().into_iter().collect();
        let corners = if mp.len() <= 10 { 1usize << mp.len() } else { 0 };
        let check = |pt: &Point| -> Result<()> {
            let m = self.mass.eval(pt)?;
            if m.is_finite() && (m > 0.0 || (m == 0.0 && !forward)) {
                Ok(())
            } else {
                Err(Error::model(format!("body `{}`: mass {m} is not admissible", self.name)))
            }
        };
        check(&nominal)?;
        for k in 0..corners {
            let mut pt = nominal.clone();
            for (i, n) in mp.iter().enumerate() {
                let p = params.get(n).expect("checked above");
                pt.insert(n.clone(), if k >> i & 1 == 1 { p.upper } else { p.lower });
            }
            check(&pt)?;
        }
        let j = self.inertia_at(&nominal)?;
        if (j - j.transpose()).abs().max() > 1e-12 * j.abs().max().max(1.0) {
            return Err(Error::model(format!("body `{}`: inertia is not symmetric", self.name)));
        }
        let ev = nalgebra::SymmetricEigen::new(j).eigenvalues;
        if ev.min() < -1e-12 * ev.abs().max().max(1.0) {
            return Err(Error::model(format!(
                "body `{}`: inertia is not positive semidefinite",
                self.name
            )));
        }
        Ok(())
    }

    // ---- numeric ------------------------------------------------------------

    pub fn mass_at(&self, point: &Point) -> Result<f64> {
        self.mass.eval(point)
    }

    pub fn inertia_at(&self, point: &Point) -> Result<M3> {
        let mut j = M3::zeros();
        for i in 0..3 {
            for k in 0..3 {
                j[(i, k)] = self.inertia[i][k].eval(point)?;
            }
        }
        Ok(j)
    }

    pub fn cog_at(&self, point: &Point) -> Result<V3> {
        eval_vec(&self.cog, point)
    }

    pub fn port_at(&self, port: &str, point: &Point) -> Result<V3> {
        eval_vec(&self.port(port)?.position, point)
    }

    /// `diag(m I3, J_B)` at the CoG.
    pub fn cog_dynamics_at(&self, point: &Point) -> Result<M6> {
        let mut d = M6::zeros();
        d.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(M3::identity() * self.mass_at(point)?));
        d.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.inertia_at(point)?);
        Ok(d)
    }

    /// `D_P = tau_BP^T D_B tau_BP`.
    pub fn direct_dynamics_at(&self, port: &str, point: &Point) -> Result<M6> {
        let bp = self.port_at(port, point)? - self.cog_at(point)?;
        let t = tau(&bp);
        Ok(t.transpose() * self.cog_dynamics_at(point)? * t)
    }

    // ---- LFT ----------------------------------------------------------------

    pub fn mass_lft(&self, params: &ParamSet) -> Result<LftMatrix> {
        lift_matrix(&[vec![self.mass.clone()]], params)
    }

    pub fn inertia_lft(&self, params: &ParamSet) -> Result<LftMatrix> {
        let rows: Vec<Vec<Expr>> = self.inertia.iter().map(|r| r.to_vec()).collect();
        lift_matrix(&rows, params)
    }

    pub fn cog_lft(&self, params: &ParamSet) -> Result<LftMatrix> {
        lift_vec(&self.cog, params)
    }

    pub fn port_lft(&self, port: &str, params: &ParamSet) -> Result<LftMatrix> {
        lift_vec(&self.port(port)?.position, params)
    }

    /// Vector from the CoG to the port, as a 3x1 LFT.
    pub fn cog_to_port_lft(&self, port: &str, params: &ParamSet) -> Result<LftMatrix> {
        let exprs = self.port(port)?.position.clone();
        let diff: Vec<Vec<Expr>> = (0..3)
            .map(|i| vec![exprs[i].clone() - self.cog[i].clone()])
            .collect();
        lift_matrix(&diff, params)
    }

    pub fn cog_dynamics_lft(&self, params: &ParamSet) -> Result<LftMatrix> {
        let m = self.mass_lft(params)?.scalar_times(&Mat::identity(3, 3));
        Ok(m.block_diag(&self.inertia_lft(params)?))
    }
}

/// Direct dynamics model of a body at one of its ports, in the body frame.
#[derive(Clone, Debug)]
pub struct DirectDynamics {
    pub matrix: LftMatrix,
    pub point: String,
    pub frame: String,
}

pub fn direct_dynamics(body: &RigidBody, port: &str, params: &ParamSet) -> Result<DirectDynamics> {
    let t = transport_lft(&body.cog_to_port_lft(port, params)?);
    let d = t.transpose().mul(&body.cog_dynamics_lft(params)?).mul(&t).reduce();
    Ok(DirectDynamics {
        matrix: d,
        point: port.to_string(),
        frame: body.name.clone(),
    })
}

/// `NL(P, omega) = tau_BP^T [m omega x (omega x PB); omega x J omega]`.
pub fn nonlinear_terms(body: &RigidBody, port: &str, omega: &V3, point: &Point) -> Result<V6> {
    let bp = body.port_at(port, point)? - body.cog_at(point)?;
    let pb = -bp;
    let m = body.mass_at(point)?;
    let j = body.inertia_at(point)?;
    let mut w = V6::zeros();
    w.fixed_rows_mut::<3>(0)
        .copy_from(&(m * omega.cross(&omega.cross(&pb))));
    w.fixed_rows_mut::<3>(3).copy_from(&omega.cross(&(j * omega)));
    Ok(tau(&bp).transpose() * w)
}

/// `W_P = D_P (x''_P + a6) + NL(P, omega)`, all in the body frame.
pub fn newton_euler_at_port(
    body: &RigidBody,
    port: &str,
    acc_p: &V6,
    omega: &V3,
    a6: &V6,
    point: &Point,
) -> Result<V6> {
    let d = body.direct_dynamics_at(port, point)?;
    Ok(d * (acc_p + a6) + nonlinear_terms(body, port, omega, point)?)
}

/// Static wrench `D_P a6` for an LFT-valued projected acceleration (6x1).
pub fn equilibrium_wrench(
    body: &RigidBody,
    port: &str,
    a6_eq: &LftMatrix,
    params: &ParamSet,
) -> Result<LftMatrix> {
    Ok(direct_dynamics(body, port, params)?.matrix.mul(a6_eq).reduce())
}

/// `K_P = [0_6x3, D_P da6/dtheta]`.
#[derive(Clone, Debug)]
pub struct StiffnessMatrix {
    pub matrix: LftMatrix,
}

pub fn stiffness(d_p: &LftMatrix, da6: &LftMatrix) -> StiffnessMatrix {
    StiffnessMatrix {
        matrix: LftMatrix::zeros(6, 3).hstack(&d_p.mul(da6)).reduce(),
    }
}

fn da6_lft(a_inertial: &V3, euler: &EulerState) -> LftMatrix {
    let (_, d) = crate::spatial::accel_projection_and_derivative(a_inertial, euler);
    LftMatrix::constant(to_dyn::<6, 3>(&d))
}

fn selector(mask: &[bool; 6]) -> Mat {
    let kept: Vec<usize> = (0..6).filter(|&i| mask[i]).collect();
    Mat::from_fn(kept.len(), 6, |i, j| if kept[i] == j { 1.0 } else { 0.0 })
}

/// Forward dynamics of Fig. 3a: input the wrench sum at the port (6), output
/// the port motion `[x''; x'; x]` (18). States `[dx' ; dx]` on kept DOF.
pub fn linearized_forward_block(
    body: &RigidBody,
    port: &str,
    a_inertial: &V3,
    euler: &EulerState,
    params: &ParamSet,
) -> Result<LftStateSpace> {
    if body.role != DynamicsRole::Forward {
        return Err(Error::model(format!("body `{}` is not in the forward role", body.name)));
    }
    let sel = selector(&body.dof_mask);
    let k = sel.nrows();
    let d = direct_dynamics(body, port, params)?.matrix;
    let kp = stiffness(&d, &da6_lft(a_inertial, euler)).matrix;
    let dk = d.mul_const_left(&sel).mul_const_right(&sel.transpose());
    let dk_nom = dk.nominal();
    if crate::lft::rcond(&dk_nom) < 1e-12 {
        return Err(Error::Singular {
            what: format!("direct dynamics of body `{}` on its unmasked DOF", body.name),
        });
    }
    let dinv = dk.inv().map_err(|_| Error::Singular {
        what: format!("direct dynamics of body `{}` on its unmasked DOF", body.name),
    })?;
    let kk = kp.mul_const_left(&sel).mul_const_right(&sel.transpose());
    let gamma = euler_rate_map(euler)?;
    let ginv = gamma
        .try_inverse()
        .ok_or(Error::GimbalLock { cos_pitch: euler.angles.y.cos() })?;
    let mut t = M6::identity();
    t.fixed_view_mut::<3, 3>(3, 3).copy_from(&ginv);
    let tk = &sel * to_dyn(&t) * sel.transpose();

    let acc_from_x = dinv.mul(&kk).neg();
    let acc_from_w = dinv.mul_const_right(&sel);
    let zk = LftMatrix::zeros(k, k);
    let a = LftMatrix::from_blocks(&[
        vec![zk.clone(), acc_from_x.clone()],
        vec![LftMatrix::constant(tk), zk.clone()],
    ]);
    let b = acc_from_w.vstack(&LftMatrix::zeros(k, 6));
    let st = LftMatrix::constant(sel.transpose());
    let c = LftMatrix::from_blocks(&[
        vec![LftMatrix::zeros(6, k), acc_from_x.mul_const_left(&sel.transpose())],
        vec![st.clone(), LftMatrix::zeros(6, k)],
        vec![LftMatrix::zeros(6, k), st],
    ]);
    let dd = acc_from_w
        .mul_const_left(&sel.transpose())
        .vstack(&LftMatrix::zeros(12, 6));
    Ok(LftStateSpace::from_blocks(&a, &b, &c, &dd).reduce())
}

/// Inverse dynamics of Fig. 3b.
#[derive(Clone, Debug)]
pub struct InverseBlock {
    /// `dW_P = [D_P, 0, K_P] dm_P`, 6x18.
    pub wrench_gain: LftMatrix,
    /// `dm_Q = Upsilon_QP dm_P` for every other port Q, 18x18 each.
    pub port_motion: Vec<(String, LftMatrix)>,
}

pub fn linearized_inverse_block(
    body: &RigidBody,
    port: &str,
    a_inertial: &V3,
    euler: &EulerState,
    params: &ParamSet,
) -> Result<InverseBlock> {
    let d = direct_dynamics(body, port, params)?.matrix;
    let kp = stiffness(&d, &da6_lft(a_inertial, euler)).matrix;
    let wrench_gain = LftMatrix::hstack_all(&[d, LftMatrix::zeros(6, 6), kp]).reduce();
    let p = body.port_lft(port, params)?;
    let mut port_motion = Vec::new();
    for q in &body.ports {
        if q.name == port {
            continue;
        }
        // offset QP = P - Q
        let qp = p.sub(&body.port_lft(&q.name, params)?).reduce();
        let t = transport_lft(&qp);
        let ups = t.block_diag(&t).block_diag(&LftMatrix::identity(6)).reduce();
        port_motion.push((q.name.clone(), ups));
    }
    Ok(InverseBlock {
        wrench_gain,
        port_motion,
    })
}
