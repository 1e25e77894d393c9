//! TOML model files.
//!
//! Dimensioned fields are tables `{ value = ..., unit = "..." }`. Values are
//! numbers or expression strings over declared parameters. Only SI units are
//! accepted, except angles which take `deg` or `rad`.

use serde::Deserialize;

use crate::assembly::{
    Boundary, ConstantForce, Input, InputKind, MultibodyModel, Output, OutputKind, Root,
};
use crate::bodies::{DynamicsRole, ExprVec3, RigidBody};
use crate::error::{Error, Result};
use crate::joints::{Connection, Endpoint, JointAngle, RevoluteJoint, RigidConnection, DEFAULT_SHAFT_INERTIA};
use crate::lft::{AngleVariant, Expr, HalfTanParam, Param, ParamKind, ParamSet};
use crate::spatial::{euler_matrix, M3, V3};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    #[serde(default)]
    pub parameters: Vec<ParamDecl>,
    #[serde(default)]
    pub angles: Vec<AngleDecl>,
    pub bodies: Vec<BodyDecl>,
    #[serde(default)]
    pub connections: Vec<ConnDecl>,
    pub boundary: BoundaryDecl,
    pub root: RootDecl,
    #[serde(default)]
    pub io: IoDecl,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoDecl {
    #[serde(default)]
    pub inputs: Vec<InputDecl>,
    #[serde(default)]
    pub outputs: Vec<OutputDecl>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDecl {
    pub name: String,
    pub kind: ParamKind,
    pub nominal: f64,
    pub lower: f64,
    pub upper: f64,
    pub unit: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleDecl {
    /// Tangent parameter name.
    pub name: String,
    /// Physical angle name.
    pub angle: String,
    pub kind: ParamKind,
    #[serde(default = "half")]
    pub variant: AngleVariant,
    pub nominal: f64,
    pub lower: f64,
    pub upper: f64,
    pub unit: String,
}

fn half() -> AngleVariant {
    AngleVariant::Half
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Expr(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quantity {
    pub value: Scalar,
    pub unit: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VecQuantity {
    pub value: [Scalar; 3],
    pub unit: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumVec {
    pub value: [f64; 3],
    pub unit: String,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum InertiaValue {
    Diagonal([Scalar; 3]),
    Full([[Scalar; 3]; 3]),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InertiaQuantity {
    pub value: InertiaValue,
    pub unit: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortDecl {
    pub name: String,
    pub position: VecQuantity,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleDecl {
    Forward,
    #[default]
    Inverse,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyDecl {
    pub name: String,
    #[serde(default)]
    pub role: RoleDecl,
    pub mass: Quantity,
    pub inertia: InertiaQuantity,
    pub cog: VecQuantity,
    #[serde(default)]
    pub ports: Vec<PortDecl>,
    /// Kept DOF names among `x y z rx ry rz`.
    pub dof_mask: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleValue {
    pub value: Option<f64>,
    pub unit: Option<String>,
    /// Tangent parameter declared in `angles`.
    pub tangent: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ConnDecl {
    Revolute {
        name: String,
        parent: String,
        child: String,
        axis: [f64; 3],
        angle: AngleValue,
        zero_orientation: Option<NumVec>,
        shaft_inertia: Option<Quantity>,
        friction: Option<Quantity>,
    },
    Rigid {
        name: String,
        parent: String,
        child: String,
        orientation: Option<NumVec>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceDecl {
    pub name: String,
    pub body: String,
    pub port: String,
    pub force: Option<VecQuantity>,
    #[serde(default)]
    pub balance: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryDecl {
    pub acceleration: NumVec,
    #[serde(default)]
    pub forces: Vec<ForceDecl>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum RootDecl {
    Ground,
    Body {
        body: String,
        port: Option<String>,
        euler: NumVec,
        linear_damping: Option<NumVec>,
        angular_damping: Option<NumVec>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputDecl {
    JointTorque { name: String, joint: String },
    Force { name: String, body: String, port: String, direction: [f64; 3] },
    Torque { name: String, body: String, axis: [f64; 3] },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutputDecl {
    JointAngle { name: String, joint: String },
    JointRate { name: String, joint: String },
    EulerAngle { name: String, body: String, axis: String },
    EulerRate { name: String, body: String, axis: String },
    Position { name: String, body: String, port: String, axis: String },
    Velocity { name: String, body: String, port: String, axis: String },
}

// ---- conversion ------------------------------------------------------------------

fn schema(section: &str, field: &str, msg: impl Into<String>) -> Error {
    Error::schema(section, field, msg)
}

fn expect_unit(section: &str, field: &str, got: &str, want: &str) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(schema(section, field, format!("unit must be `{want}`, got `{got}`")))
    }
}

fn angle_factor(section: &str, field: &str, unit: &str) -> Result<f64> {
    match unit {
        "deg" => Ok(std::f64::consts::PI / 180.0),
        "rad" => Ok(1.0),
        other => Err(schema(section, field, format!("angle unit must be `deg` or `rad`, got `{other}`"))),
    }
}

fn scalar(section: &str, field: &str, s: &Scalar, params: &ParamSet) -> Result<Expr> {
    let e = match s {
        Scalar::Number(v) => Expr::c(*v),
        Scalar::Expr(src) => Expr::parse(src).map_err(|e| schema(section, field, e.to_string()))?,
    };
    for p in e.params() {
        if params.get(&p).is_none() {
            return Err(schema(section, field, format!("unknown parameter `{p}`")));
        }
    }
    Ok(e)
}

fn quantity(section: &str, field: &str, q: &Quantity, unit: &str, params: &ParamSet) -> Result<Expr> {
    expect_unit(section, field, &q.unit, unit)?;
    scalar(section, field, &q.value, params)
}

fn vec_quantity(section: &str, field: &str, q: &VecQuantity, unit: &str, params: &ParamSet) -> Result<ExprVec3> {
    expect_unit(section, field, &q.unit, unit)?;
    Ok([
        scalar(section, field, &q.value[0], params)?,
        scalar(section, field, &q.value[1], params)?,
        scalar(section, field, &q.value[2], params)?,
    ])
}

fn num_vec(section: &str, field: &str, q: &NumVec, unit: &str) -> Result<V3> {
    expect_unit(section, field, &q.unit, unit)?;
    Ok(V3::from(q.value))
}

fn orientation(section: &str, field: &str, q: &Option<NumVec>) -> Result<M3> {
    match q {
        None => Ok(M3::identity()),
        Some(v) => {
            let k = angle_factor(section, field, &v.unit)?;
            Ok(euler_matrix(&(V3::from(v.value) * k)))
        }
    }
}

fn axis_index(section: &str, field: &str, s: &str) -> Result<usize> {
    match s {
        "x" => Ok(0),
        "y" => Ok(1),
        "z" => Ok(2),
        other => Err(schema(section, field, format!("axis must be x, y or z, got `{other}`"))),
    }
}

fn endpoint(section: &str, field: &str, s: &str) -> Result<Endpoint> {
    if s == "ground" {
        return Ok(Endpoint::Ground);
    }
    match s.split_once('.') {
        Some((b, p)) if !b.is_empty() && !p.is_empty() => Ok(Endpoint::port(b, p)),
        _ => Err(schema(section, field, format!("expected `body.port` or `ground`, got `{s}`"))),
    }
}

fn unit_axis(section: &str, field: &str, v: [f64; 3]) -> Result<V3> {
    let a = V3::from(v);
    let n = a.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(schema(section, field, "direction must be a non-zero vector"));
    }
    Ok(a / n)
}

impl ModelFile {
    pub fn parse(src: &str) -> Result<ModelFile> {
        toml::from_str(src).map_err(|e| {
            let msg = e.message().to_string();
            let span = e.span().unwrap_or(0..0);
            let end = span.end.min(src.len());
            let line = src[..span.start.min(src.len())].lines().count().max(1);
            // nearest table header at or above the error
            let section = src[..end]
                .lines()
                .rev()
                .find(|l| l.trim_start().starts_with('['))
                .map(|l| l.trim().trim_matches(|c| c == '[' || c == ']').to_string())
                .unwrap_or_else(|| "(top level)".into());
            let field = ["unknown field `", "missing field `"]
                .iter()
                .find_map(|pre| msg.split_once(pre).and_then(|(_, rest)| rest.split_once('`')))
                .map(|(name, _)| name.to_string())
                .unwrap_or_else(|| format!("line {line}"));
            schema(&section, &field, format!("{msg} (line {line})"))
        })
    }

    pub fn into_model(self) -> Result<MultibodyModel> {
        let mut params = ParamSet::new();
        for p in &self.parameters {
            let param = Param::new(&p.name, p.kind, p.nominal, p.lower, p.upper)
                .map_err(|e| schema("parameters", &p.name, e.to_string()))?
                .with_unit(&p.unit);
            params
                .insert(param)
                .map_err(|e| schema("parameters", &p.name, e.to_string()))?;
        }
        for a in &self.angles {
            let k = angle_factor("angles", &a.name, &a.unit)?;
            let h = HalfTanParam::from_angle_range(
                &a.name,
                &a.angle,
                a.kind,
                a.nominal * k,
                a.lower * k,
                a.upper * k,
                a.variant,
            )
            .map_err(|e| schema("angles", &a.name, e.to_string()))?;
            params
                .insert_angle(h)
                .map_err(|e| schema("angles", &a.name, e.to_string()))?;
        }

        let mut bodies = Vec::new();
        for b in &self.bodies {
            let sec = format!("bodies.{}", b.name);
            let mass = quantity(&sec, "mass", &b.mass, "kg", &params)?;
            expect_unit(&sec, "inertia", &b.inertia.unit, "kg*m^2")?;
            let inertia = match &b.inertia.value {
                InertiaValue::Diagonal(d) => RigidBody::diagonal_inertia([
                    scalar(&sec, "inertia", &d[0], &params)?,
                    scalar(&sec, "inertia", &d[1], &params)?,
                    scalar(&sec, "inertia", &d[2], &params)?,
                ]),
                InertiaValue::Full(m) => {
                    let mut rows = Vec::with_capacity(3);
                    for row in m {
                        rows.push([
                            scalar(&sec, "inertia", &row[0], &params)?,
                            scalar(&sec, "inertia", &row[1], &params)?,
                            scalar(&sec, "inertia", &row[2], &params)?,
                        ]);
                    }
                    let [r0, r1, r2]: [[Expr; 3]; 3] = rows.try_into().expect("three rows");
                    [r0, r1, r2]
                }
            };
            let cog = vec_quantity(&sec, "cog", &b.cog, "m", &params)?;
            let mut body = RigidBody::new(&b.name, mass, inertia, cog);
            for p in &b.ports {
                let pos = vec_quantity(&sec, &format!("ports.{}", p.name), &p.position, "m", &params)?;
                body = body.with_port(&p.name, pos);
            }
            body.role = match b.role {
                RoleDecl::Forward => DynamicsRole::Forward,
                RoleDecl::Inverse => DynamicsRole::Inverse,
            };
            match (&b.role, &b.dof_mask) {
                (RoleDecl::Forward, Some(list)) => {
                    let mut mask = [false; 6];
                    for name in list {
                        let k = ["x", "y", "z", "rx", "ry", "rz"]
                            .iter()
                            .position(|n| n == name)
                            .ok_or_else(|| schema(&sec, "dof_mask", format!("unknown DOF `{name}`")))?;
                        mask[k] = true;
                    }
                    body.dof_mask = mask;
                }
                (RoleDecl::Forward, None) => body.dof_mask = [true; 6],
                (RoleDecl::Inverse, Some(_)) => {
                    return Err(schema(&sec, "dof_mask", "only the forward-role body has a DOF mask"))
                }
                (RoleDecl::Inverse, None) => {}
            }
            bodies.push(body);
        }

        let mut connections = Vec::new();
        for c in &self.connections {
            connections.push(match c {
                ConnDecl::Revolute {
                    name,
                    parent,
                    child,
                    axis,
                    angle,
                    zero_orientation,
                    shaft_inertia,
                    friction,
                } => {
                    let sec = format!("connections.{name}");
                    let angle = match (angle.value, &angle.unit, &angle.tangent) {
                        (Some(v), Some(u), None) => JointAngle::Fixed(v * angle_factor(&sec, "angle", u)?),
                        (Some(_), None, None) => {
                            return Err(schema(&sec, "angle", "angle unit is mandatory (`deg` or `rad`)"))
                        }
                        (None, None, Some(t)) => JointAngle::Param(
                            params
                                .angle(t)
                                .cloned()
                                .ok_or_else(|| schema(&sec, "angle", format!("unknown tangent parameter `{t}`")))?,
                        ),
                        _ => {
                            return Err(schema(
                                &sec,
                                "angle",
                                "give either `value` with `unit` or `tangent`",
                            ))
                        }
                    };
                    let mut j = RevoluteJoint::new(
                        name,
                        endpoint(&sec, "parent", parent)?,
                        endpoint(&sec, "child", child)?,
                        unit_axis(&sec, "axis", *axis)?,
                        angle,
                    )
                    .with_zero_dcm(orientation(&sec, "zero_orientation", zero_orientation)?);
                    j.shaft_inertia = match shaft_inertia {
                        Some(q) => const_quantity(&sec, "shaft_inertia", q, "kg*m^2")?,
                        None => DEFAULT_SHAFT_INERTIA,
                    };
                    if let Some(q) = friction {
                        j.friction = const_quantity(&sec, "friction", q, "N*m*s/rad")?;
                    }
                    Connection::Revolute(j)
                }
                ConnDecl::Rigid {
                    name,
                    parent,
                    child,
                    orientation: o,
                } => {
                    let sec = format!("connections.{name}");
                    Connection::Rigid(RigidConnection {
                        name: name.clone(),
                        parent: endpoint(&sec, "parent", parent)?,
                        child: endpoint(&sec, "child", child)?,
                        dcm: orientation(&sec, "orientation", o)?,
                    })
                }
            });
        }

        let acceleration = num_vec("boundary", "acceleration", &self.boundary.acceleration, "m/s^2")?;
        let mut forces = Vec::new();
        for f in &self.boundary.forces {
            let sec = format!("boundary.forces.{}", f.name);
            let force = match (&f.force, f.balance) {
                (Some(q), false) => vec_quantity(&sec, "force", q, "N", &params)?,
                (None, true) => [Expr::c(0.0), Expr::c(0.0), Expr::c(0.0)],
                _ => return Err(schema(&sec, "force", "give either `force` or `balance = true`")),
            };
            forces.push(ConstantForce {
                name: f.name.clone(),
                body: f.body.clone(),
                port: f.port.clone(),
                force,
                balance: f.balance,
            });
        }

        let root = match &self.root {
            RootDecl::Ground => Root::Ground,
            RootDecl::Body {
                body,
                port,
                euler,
                linear_damping,
                angular_damping,
            } => {
                let k = angle_factor("root", "euler", &euler.unit)?;
                let lin = match linear_damping {
                    Some(v) => num_vec("root", "linear_damping", v, "N*s/m")?,
                    None => V3::zeros(),
                };
                let ang = match angular_damping {
                    Some(v) => num_vec("root", "angular_damping", v, "N*m*s/rad")?,
                    None => V3::zeros(),
                };
                Root::Body {
                    body: body.clone(),
                    port: port.clone(),
                    euler: V3::from(euler.value) * k,
                    damping: [lin.x, lin.y, lin.z, ang.x, ang.y, ang.z],
                }
            }
        };

        let inputs = self
            .io
            .inputs
            .iter()
            .map(|i| {
                Ok(match i {
                    InputDecl::JointTorque { name, joint } => Input {
                        name: name.clone(),
                        kind: InputKind::JointTorque { joint: joint.clone() },
                    },
                    InputDecl::Force { name, body, port, direction } => Input {
                        name: name.clone(),
                        kind: InputKind::Force {
                            body: body.clone(),
                            port: port.clone(),
                            direction: unit_axis(&format!("inputs.{name}"), "direction", *direction)?,
                        },
                    },
                    InputDecl::Torque { name, body, axis } => Input {
                        name: name.clone(),
                        kind: InputKind::Torque {
                            body: body.clone(),
                            axis: unit_axis(&format!("inputs.{name}"), "axis", *axis)?,
                        },
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let outputs = self
            .io
            .outputs
            .iter()
            .map(|o| {
                Ok(match o {
                    OutputDecl::JointAngle { name, joint } => Output {
                        name: name.clone(),
                        kind: OutputKind::JointAngle { joint: joint.clone() },
                    },
                    OutputDecl::JointRate { name, joint } => Output {
                        name: name.clone(),
                        kind: OutputKind::JointRate { joint: joint.clone() },
                    },
                    OutputDecl::EulerAngle { name, body, axis } => Output {
                        name: name.clone(),
                        kind: OutputKind::EulerAngle {
                            body: body.clone(),
                            index: axis_index(&format!("outputs.{name}"), "axis", axis)?,
                        },
                    },
                    OutputDecl::EulerRate { name, body, axis } => Output {
                        name: name.clone(),
                        kind: OutputKind::EulerRate {
                            body: body.clone(),
                            index: axis_index(&format!("outputs.{name}"), "axis", axis)?,
                        },
                    },
                    OutputDecl::Position { name, body, port, axis } => Output {
                        name: name.clone(),
                        kind: OutputKind::Position {
                            body: body.clone(),
                            port: port.clone(),
                            index: axis_index(&format!("outputs.{name}"), "axis", axis)?,
                        },
                    },
                    OutputDecl::Velocity { name, body, port, axis } => Output {
                        name: name.clone(),
                        kind: OutputKind::Velocity {
                            body: body.clone(),
                            port: port.clone(),
                            index: axis_index(&format!("outputs.{name}"), "axis", axis)?,
                        },
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let model = MultibodyModel {
            name: self.name,
            params,
            bodies,
            connections,
            root,
            boundary: Boundary { acceleration, forces },
            inputs,
            outputs,
        };
        model.tree()?;
        Ok(model)
    }
}

fn const_quantity(section: &str, field: &str, q: &Quantity, unit: &str) -> Result<f64> {
    expect_unit(section, field, &q.unit, unit)?;
    match &q.value {
        Scalar::Number(v) => Ok(*v),
        Scalar::Expr(_) => Err(schema(section, field, "must be a number")),
    }
}

/// Parse and validate a model file.
pub fn load_model_str(src: &str) -> Result<MultibodyModel> {
    ModelFile::parse(src)?.into_model()
}

pub fn load_model(path: &std::path::Path) -> Result<MultibodyModel> {
    let src = std::fs::read_to_string(path)?;
    load_model_str(&src)
}
