//! Pendulum poles against sqrt(g/L) across the length range.

use std::path::PathBuf;

use lft_multibody::assembly::{assemble, modes, sample_model, AssemblyOptions};
use lft_multibody::cli::load_model;
use lft_multibody::lft::{BoundsMode, Point};

fn model(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models").join(format!("{name}.toml"))
}

fn main() -> lft_multibody::Result<()> {
    let lm = assemble(&load_model(&model("pendulum"))?, AssemblyOptions::default())?;
    println!("states: {:?}", lm.states);
    for l in [0.8, 0.9, 1.0, 1.1, 1.2] {
        let ss = sample_model(&lm, &Point::from([("L".to_string(), l)]), BoundsMode::Strict)?;
        let md = modes(&ss.a);
        println!(
            "L = {l:.1}: poles {:+.6} +- {:.6}i, sqrt(g/L) = {:.6}",
            md[0].re,
            md[0].im.abs(),
            (9.81 / l).sqrt()
        );
    }
    Ok(())
}
