//! Parametric LFT models of rigid multibody trees.

pub mod error;
pub mod lft;
pub mod spatial;
pub mod ss;
pub mod bodies;
pub mod joints;
pub mod assembly;
pub mod oracle;
pub mod cli;

pub use error::{Error, Result};
