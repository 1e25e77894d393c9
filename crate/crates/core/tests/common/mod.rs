#![allow(dead_code)]

use std::path::PathBuf;

use lft_multibody::assembly::MultibodyModel;
use lft_multibody::cli::{load_model, load_model_str};

pub fn model_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(format!("{name}.toml"))
}

pub fn model_src(name: &str) -> String {
    std::fs::read_to_string(model_path(name)).unwrap()
}

pub fn shipped(name: &str) -> MultibodyModel {
    load_model(&model_path(name)).unwrap()
}

/// Shipped model with a textual substitution applied to its file.
pub fn edited(name: &str, from: &str, to: &str) -> MultibodyModel {
    let src = model_src(name);
    assert!(src.contains(from), "`{from}` not found in {name}");
    load_model_str(&src.replacen(from, to, 1)).unwrap()
}

pub const G: f64 = 9.81;
