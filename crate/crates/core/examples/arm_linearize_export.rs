//! Linearize the arm, print the occurrence table and write the JSON export.

use std::path::PathBuf;

use lft_multibody::assembly::LinearLftModel;
use lft_multibody::cli::{cmd_linearize, load_model, LinearizeFlags};

fn model(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models").join(format!("{name}.toml"))
}

fn main() -> lft_multibody::Result<()> {
    let arm = load_model(&model("two_link_arm"))?;
    let (lm, report) = cmd_linearize(&arm, LinearizeFlags::default())?;
    print!("{}", report.render());
    let out = std::env::temp_dir().join("two_link_arm.lft.json");
    std::fs::write(&out, lm.to_json()?)?;
    let back = LinearLftModel::from_json(&std::fs::read_to_string(&out)?)?;
    println!("wrote {} ({} states, Delta order {})", out.display(), back.n_states(), back.system.system.order());
    Ok(())
}
