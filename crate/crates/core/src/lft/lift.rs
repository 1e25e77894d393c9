//! Lifting rational expressions into LFTs, and block interconnection.

use super::expr::Expr;
use super::matrix::{hcat, invert_checked, rcond, vcat, LftMatrix, Mat};
use super::param::ParamSet;
use crate::error::{Error, Result};

/// Lift a rational expression to a 1x1 LFT.
pub fn lift_scalar(expr: &Expr, params: &ParamSet) -> Result<LftMatrix> {
    let out = lift_rec(expr, params)?;
    out.check_well_posed()?;
    Ok(out)
}

fn lift_rec(expr: &Expr, params: &ParamSet) -> Result<LftMatrix> {
    Ok(match expr {
        Expr::Const(v) => LftMatrix::scalar(*v),
        Expr::Param(n) => {
            let p = params.get(n).ok_or_else(|| Error::Lift {
                expr: n.clone(),
                reason: "unknown parameter".into(),
            })?;
            LftMatrix::param(p)
        }
        Expr::Neg(a) => lift_rec(a, params)?.neg(),
        Expr::Add(a, b) => lift_rec(a, params)?.add(&lift_rec(b, params)?),
        Expr::Sub(a, b) => lift_rec(a, params)?.sub(&lift_rec(b, params)?),
        Expr::Mul(a, b) => lift_rec(a, params)?.mul(&lift_rec(b, params)?),
        Expr::Div(a, b) => {
            let num = lift_rec(a, params)?;
            let den = lift_rec(b, params)?;
            num.mul(&invert_scalar(&den, b)?)
        }
        Expr::Pow(a, n) => {
            let base = lift_rec(a, params)?;
            let mut acc = LftMatrix::scalar(1.0);
            for _ in 0..n.unsigned_abs() {
                acc = acc.mul(&base);
            }
            if *n < 0 {
                invert_scalar(&acc, expr)?
            } else {
                acc
            }
        }
    })
}

fn invert_scalar(den: &LftMatrix, src: &Expr) -> Result<LftMatrix> {
    let at_nominal = den.nominal()[(0, 0)];
    if at_nominal == 0.0 || !at_nominal.is_finite() {
        return Err(Error::Lift {
            expr: src.to_string(),
            reason: "denominator vanishes at the nominal point".into(),
        });
    }
    den.inv().map_err(|e| Error::Lift {
        expr: src.to_string(),
        reason: e.to_string(),
    })
}

/// Constant wiring of an interconnection.
///
/// With `y` the stacked outputs of all blocks, `u` their stacked inputs, `w`
/// the external inputs and `z` the external outputs:
/// `u = u_from_y * y + u_from_w * w` and `z = z_from_y * y + z_from_w * w`.
#[derive(Clone, Debug)]
pub struct Wiring {
    pub u_from_y: Mat,
    pub u_from_w: Mat,
    pub z_from_y: Mat,
    pub z_from_w: Mat,
}

impl Wiring {
    /// Plain series connection `z = b(a(w))` for blocks `[a, b]`.
    pub fn series(a: (usize, usize), b: (usize, usize)) -> Self {
        let (ar, ac) = a;
        let (br, bc) = b;
        assert_eq!(ar, bc, "series: a outputs must match b inputs");
        let ny = ar + br;
        let nu = ac + bc;
        let mut u_from_y = Mat::zeros(nu, ny);
        for i in 0..ar {
            u_from_y[(ac + i, i)] = 1.0;
        }
        let mut u_from_w = Mat::zeros(nu, ac);
        for i in 0..ac {
            u_from_w[(i, i)] = 1.0;
        }
        let mut z_from_y = Mat::zeros(br, ny);
        for i in 0..br {
            z_from_y[(i, ar + i)] = 1.0;
        }
        Wiring {
            u_from_y,
            u_from_w,
            z_from_y,
            z_from_w: Mat::zeros(br, ac),
        }
    }
}

/// Close a block diagram: the map `w -> z` as an LFT.
///
/// The channels of the blocks are kept as they are; only the outer loop is
/// closed, so occurrence counts never exceed the sum over the blocks.
pub fn interconnect(blocks: &[&LftMatrix], wiring: &Wiring) -> Result<LftMatrix> {
    let mut g = blocks[0].clone();
    for b in &blocks[1..] {
        g = g.block_diag(b);
    }
    let (ny, nu) = g.shape();
    let w = &wiring;
    let nz = w.z_from_w.nrows();
    let nw = w.z_from_w.ncols();
    if w.u_from_y.shape() != (nu, ny)
        || w.z_from_y.shape() != (nz, ny)
        || w.u_from_w.shape() != (nu, nw)
    {
        return Err(Error::model("interconnection wiring is dimension-inconsistent"));
    }
    let nominal_loop = Mat::identity(ny, ny) - g.nominal() * &w.u_from_y;
    if rcond(&nominal_loop) < 1e-12 {
        return Err(Error::IllPosed {
            rcond: rcond(&nominal_loop),
            context: "interconnection singular at the nominal point".into(),
        });
    }
    let (g11, g12, g21, g22) = (g.m11(), g.m12(), g.m21(), g.m22());
    let center_loop = Mat::identity(ny, ny) - &g11 * &w.u_from_y;
    let Ok(x) = invert_checked(center_loop, "interconnection loop") else {
        // loop singular at the box center only: fall back on LFT inversion
        let loop_gain = LftMatrix::identity(ny).sub(&g.mul_const_right(&w.u_from_y));
        let closed = loop_gain.inv()?.mul(&g.mul_const_right(&w.u_from_w));
        let z = closed
            .mul_const_left(&w.z_from_y)
            .add(&LftMatrix::constant(w.z_from_w.clone()));
        return Ok(z.reduce());
    };
    let xg11 = &x * &g11;
    let xg12 = &x * &g12;
    let m11 = &w.z_from_y * &xg11 * &w.u_from_w + &w.z_from_w;
    let m12 = &w.z_from_y * &xg12;
    let m21 = &g21 * (&w.u_from_w + &w.u_from_y * &xg11 * &w.u_from_w);
    let m22 = &g22 + &g21 * &w.u_from_y * &xg12;
    let m = vcat(&hcat(&m11, &m12), &hcat(&m21, &m22));
    let z = g.with_outer(nz, nw, m);
    z.check_well_posed()?;
    Ok(z.reduce())
}

/// Two-block interconnection.
pub fn compose(a: &LftMatrix, b: &LftMatrix, wiring: &Wiring) -> Result<LftMatrix> {
    interconnect(&[a, b], wiring)
}

/// Lift a matrix of expressions entry by entry.
pub fn lift_matrix(rows: &[Vec<Expr>], params: &ParamSet) -> Result<LftMatrix> {
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let cells = row
            .iter()
            .map(|e| lift_scalar(e, params))
            .collect::<Result<Vec<_>>>()?;
        out.push(LftMatrix::hstack_all(&cells));
    }
    Ok(LftMatrix::vstack_all(&out).reduce())
}
