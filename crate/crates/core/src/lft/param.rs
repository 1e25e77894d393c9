//! Named scalar parameters: the atoms routed to the perturbation blocks.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which perturbation block a parameter is routed to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    /// Routed to the uncertainty block.
    Uncertain,
    /// Routed to the scheduling block.
    Varying,
    /// Routed to the design block.
    Design,
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamKind::Uncertain => "uncertain",
            ParamKind::Varying => "varying",
            ParamKind::Design => "design",
        })
    }
}

/// A bounded real parameter.
///
/// Internally every parameter is normalized to `delta` in `[-1, 1]` through
/// `p = center + spread * delta`, with `center` the midpoint of the bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub nominal: f64,
    pub lower: f64,
    pub upper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl Param {
    pub fn new(
        name: impl Into<String>,
        kind: ParamKind,
        nominal: f64,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        let p = Param {
            name: name.into(),
            kind,
            nominal,
            lower,
            upper,
            unit: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameter with symmetric relative uncertainty, e.g. `pct = 5.0` for +-5 %.
    pub fn relative(name: impl Into<String>, kind: ParamKind, nominal: f64, pct: f64) -> Result<Self> {
        let d = (nominal * pct / 100.0).abs();
        Param::new(name, kind, nominal, nominal - d, nominal + d)
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = Some(unit.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidParam {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.name.is_empty() {
            return Err(bad("empty name"));
        }
        if !(self.lower.is_finite() && self.upper.is_finite() && self.nominal.is_finite()) {
            return Err(bad("non-finite bound or nominal"));
        }
        if !(self.lower < self.upper) {
            return Err(bad("lower bound must be strictly below upper bound"));
        }
        if self.nominal < self.lower || self.nominal > self.upper {
            return Err(bad("nominal outside bounds"));
        }
        Ok(())
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn spread(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    /// Normalized coordinate of a physical value.
    pub fn normalize(&self, value: f64) -> f64 {
        (value - self.center()) / self.spread()
    }

    pub fn denormalize(&self, delta: f64) -> f64 {
        self.center() + self.spread() * delta
    }

    pub fn contains(&self, value: f64) -> bool {
        let slack = 1e-12 * self.spread().max(self.center().abs());
        value >= self.lower - slack && value <= self.upper + slack
    }
}

/// Tangent substitution used to enter an angle rationally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleVariant {
    /// `t = tan(theta / 2)`
    Half,
    /// `t = tan(theta / 4)`
    Quarter,
}

impl AngleVariant {
    pub fn divisor(self) -> f64 {
        match self {
            AngleVariant::Half => 2.0,
            AngleVariant::Quarter => 4.0,
        }
    }
}

/// An angle represented through a tangent parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfTanParam {
    /// Name of the physical angle (informational).
    pub base_angle_name: String,
    pub t: Param,
    pub variant: AngleVariant,
}

impl HalfTanParam {
    /// Build from an angle range in radians.
    pub fn from_angle_range(
        name: impl Into<String>,
        base_angle_name: impl Into<String>,
        kind: ParamKind,
        nominal: f64,
        lower: f64,
        upper: f64,
        variant: AngleVariant,
    ) -> Result<Self> {
        let name = name.into();
        let limit = match variant {
            AngleVariant::Half => std::f64::consts::PI,
            AngleVariant::Quarter => 2.0 * std::f64::consts::PI,
        };
        if lower <= -limit || upper >= limit {
            return Err(Error::InvalidParam {
                name,
                reason: format!("angle range must lie strictly inside (-{limit}, {limit}) rad"),
            });
        }
        let k = variant.divisor();
        let t = Param::new(
            name,
            kind,
            (nominal / k).tan(),
            (lower / k).tan(),
            (upper / k).tan(),
        )?;
        Ok(HalfTanParam {
            base_angle_name: base_angle_name.into(),
            t,
            variant,
        })
    }

    pub fn angle_of(&self, t: f64) -> f64 {
        self.variant.divisor() * t.atan()
    }

    pub fn tangent_of(&self, angle: f64) -> f64 {
        (angle / self.variant.divisor()).tan()
    }

    pub fn nominal_angle(&self) -> f64 {
        self.angle_of(self.t.nominal)
    }
}

/// Registry of the parameters used by one model, keyed by name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    params: BTreeMap<String, Param>,
    #[serde(default)]
    angles: BTreeMap<String, HalfTanParam>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, p: Param) -> Result<()> {
        p.validate()?;
        if self.params.contains_key(&p.name) {
            return Err(Error::InvalidParam {
                name: p.name,
                reason: "duplicate parameter name".into(),
            });
        }
        self.params.insert(p.name.clone(), p);
        Ok(())
    }

    pub fn insert_angle(&mut self, a: HalfTanParam) -> Result<()> {
        self.insert(a.t.clone())?;
        self.angles.insert(a.t.name.clone(), a);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn angle(&self, name: &str) -> Option<&HalfTanParam> {
        self.angles.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.values()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn nominal_point(&self) -> Point {
        self.params
            .values()
            .map(|p| (p.name.clone(), p.nominal))
            .collect()
    }

    /// `point` completed with nominal values for every missing parameter.
    pub fn complete(&self, point: &Point) -> Point {
        let mut out = self.nominal_point();
        for (k, v) in point {
            out.insert(k.clone(), *v);
        }
        out
    }

    pub fn angles(&self) -> impl Iterator<Item = &HalfTanParam> {
        self.angles.values()
    }

    /// Uniform sample in the parameter box.
    pub fn random_point<R: rand::Rng>(&self, rng: &mut R) -> Point {
        self.params
            .values()
            .map(|p| (p.name.clone(), rng.gen_range(p.lower..=p.upper)))
            .collect()
    }
}

/// A parameter point: physical values keyed by parameter name.
pub type Point = BTreeMap<String, f64>;
