//! Compare the parametric model with central differences of the nonlinear dynamics.

use std::path::PathBuf;

use lft_multibody::assembly::{assemble, sample_model, AssemblyOptions};
use lft_multibody::cli::load_model;
use lft_multibody::lft::BoundsMode;
use lft_multibody::oracle::{fd_linearize, rel_frobenius, FdConfig, NonlinearEvaluator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models").join(format!("{name}.toml"))
}

fn main() -> lft_multibody::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "two_link_arm".into());
    let m = load_model(&model(&name))?;
    let lm = assemble(&m, AssemblyOptions::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut points = vec![m.params.nominal_point()];
    points.extend((0..5).map(|_| m.params.random_point(&mut rng)));
    for (i, p) in points.iter().enumerate() {
        let ss = sample_model(&lm, p, BoundsMode::Strict)?;
        let ev = NonlinearEvaluator::new(&m, p)?;
        let (a, b) = fd_linearize(&ev, &ev.trim_torques()?, FdConfig::default())?;
        println!("{name} point {i}: rel A {:.2e}, rel B {:.2e}", rel_frobenius(&ss.a, &a), rel_frobenius(&ss.b, &b));
    }
    Ok(())
}
