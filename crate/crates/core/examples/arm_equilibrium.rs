//! Holding torques of the two-link arm as functions of the joint angles.

use std::path::PathBuf;

use lft_multibody::assembly::{equilibrium_report, step1_geometry, step2_wrenches};
use lft_multibody::cli::load_model;

fn model(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models").join(format!("{name}.toml"))
}

fn main() -> lft_multibody::Result<()> {
    let arm = load_model(&model("two_link_arm"))?;
    let sol = step2_wrenches(&arm, step1_geometry(&arm)?)?;
    println!("{:>8} {:>8} {:>10} {:>10}", "theta1", "theta2", "J1 [N*m]", "J2 [N*m]");
    for th1 in [45.0f64, 67.5, 90.0] {
        for th2 in [45.0f64, 90.0, 135.0] {
            let mut p = arm.params.nominal_point();
            p.insert("t1".into(), (th1.to_radians() / 2.0).tan());
            p.insert("t2".into(), (th2.to_radians() / 2.0).tan());
            let eq = equilibrium_report(&arm, &sol, &p)?;
            println!("{th1:>8.1} {th2:>8.1} {:>10.4} {:>10.4}", eq.joints[0].torque, eq.joints[1].torque);
        }
    }
    Ok(())
}
