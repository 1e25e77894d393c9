//! Planar rotations from half- and quarter-angle tangents.

use std::f64::consts::PI;

use lft_multibody::lft::{rotation_lft, AngleVariant, HalfTanParam, ParamKind, Point};

fn main() -> lft_multibody::Result<()> {
    for (variant, lo, hi) in [(AngleVariant::Half, -2.5, 2.5), (AngleVariant::Quarter, -PI, PI)] {
        let angle = HalfTanParam::from_angle_range("t", "theta", ParamKind::Varying, 0.0, lo, hi, variant)?;
        let r = rotation_lft(&angle)?;
        println!("{variant:?}: {} occurrences of t, t in [{:.3}, {:.3}]", r.order(), angle.t.lower, angle.t.upper);
        for deg in [-150.0f64, -90.0, 0.0, 45.0, 135.0] {
            let th = deg.to_radians();
            if th < lo || th > hi {
                continue;
            }
            let v = r.evaluate(&Point::from([("t".to_string(), angle.tangent_of(th))]))?;
            let err = (v[(0, 0)] - th.cos()).abs().max((v[(1, 0)] - th.sin()).abs());
            println!("  {deg:>6.1} deg: cos {:+.6} sin {:+.6} err {err:.1e}", v[(0, 0)], v[(1, 0)]);
        }
    }
    Ok(())
}
