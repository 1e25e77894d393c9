//! Planar rotation matrices as LFTs of a tangent parameter.
//!
//! With `t = tan(theta/2)` and `J = [[0, -1], [1, 0]]`, the Cayley form
//! `R = (I + tJ)(I - tJ)^-1 = -I + 2 (I - tJ)^-1` needs `t` twice.

use super::matrix::{LftMatrix, Mat};
use super::param::{AngleVariant, HalfTanParam};
use crate::error::{Error, Result};

fn j2() -> Mat {
    Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
}

fn cayley(t: &LftMatrix) -> Result<LftMatrix> {
    let tj = t.kron_identity(2).mul_const_right(&j2());
    let resolvent = LftMatrix::identity(2).sub(&tj).inv()?;
    Ok(resolvent.scale(2.0).sub(&LftMatrix::identity(2)))
}

/// `[[cos, -sin], [sin, cos]]` with two occurrences of `t = tan(theta/2)`.
pub fn rotation_lft_half(t: &HalfTanParam) -> Result<LftMatrix> {
    if t.variant != AngleVariant::Half {
        return Err(Error::InvalidParam {
            name: t.t.name.clone(),
            reason: "expected a half-angle tangent parameter".into(),
        });
    }
    cayley(&LftMatrix::param(&t.t))
}

/// Same rotation from `t' = tan(theta/4)`: four occurrences, `t'` in (-1, 1)
/// for theta in (-pi, pi).
pub fn rotation_lft_quarter(t: &HalfTanParam) -> Result<LftMatrix> {
    if t.variant != AngleVariant::Quarter {
        return Err(Error::InvalidParam {
            name: t.t.name.clone(),
            reason: "expected a quarter-angle tangent parameter".into(),
        });
    }
    let half = cayley(&LftMatrix::param(&t.t))?;
    Ok(half.mul(&half))
}

/// Rotation for either variant.
pub fn rotation_lft(t: &HalfTanParam) -> Result<LftMatrix> {
    match t.variant {
        AngleVariant::Half => rotation_lft_half(t),
        AngleVariant::Quarter => rotation_lft_quarter(t),
    }
}
