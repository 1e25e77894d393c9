//! Lift a rational expression, combine LFTs and reduce the result.

use lft_multibody::lft::{lift_scalar, Expr, Param, ParamKind, ParamSet, Point};

fn main() -> lft_multibody::Result<()> {
    let mut params = ParamSet::new();
    params.insert(Param::new("m", ParamKind::Uncertain, 2.0, 1.5, 2.5)?.with_unit("kg"))?;
    params.insert(Param::new("l", ParamKind::Design, 1.0, 0.5, 1.5)?.with_unit("m"))?;

    let inertia = lift_scalar(&Expr::parse("m*l^2")?, &params)?;
    let stiffness = lift_scalar(&Expr::parse("9.81*m*l")?, &params)?;
    let omega_sq = inertia.inv()?.mul(&stiffness);
    println!("raw occurrences:     {:?}", omega_sq.occurrences());
    let reduced = omega_sq.reduce();
    println!("reduced occurrences: {:?}", reduced.occurrences());

    for l in [0.5, 1.0, 1.5] {
        let p = Point::from([("m".to_string(), 2.2), ("l".to_string(), l)]);
        let w2 = reduced.evaluate(&p)?[(0, 0)];
        println!("l = {l:.1} m: omega^2 = {w2:.6} (g/l = {:.6})", 9.81 / l);
    }
    Ok(())
}
