//! Sweep the flexible-link length of the balloon and follow its lightly damped modes.

use std::path::PathBuf;

use lft_multibody::assembly::{assemble, modes, sample_model, AssemblyOptions};
use lft_multibody::cli::{grid_points, load_model, parse_grid};
use lft_multibody::lft::BoundsMode;

fn model(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models").join(format!("{name}.toml"))
}

fn main() -> lft_multibody::Result<()> {
    let balloon = load_model(&model("balloon_planar"))?;
    let lm = assemble(&balloon, AssemblyOptions::default())?;
    println!("{} states, occurrences {:?}", lm.n_states(), lm.occurrences());
    let axes = vec![parse_grid("l6=10:60:11", &lm.params)?];
    for p in grid_points(&axes) {
        let ss = sample_model(&lm, &lm.params.complete(&p), BoundsMode::Strict)?;
        let mut oscillatory: Vec<_> = modes(&ss.a).into_iter().filter(|m| m.im > 0.0).collect();
        oscillatory.sort_by(|a, b| a.freq_hz.total_cmp(&b.freq_hz));
        let first: Vec<String> = oscillatory
            .iter()
            .take(3)
            .map(|m| format!("{:.4} Hz / zeta {:.3}", m.freq_hz, m.damping))
            .collect();
        println!("l6 = {:>4.1} m: {}", p["l6"], first.join(", "));
    }
    Ok(())
}
