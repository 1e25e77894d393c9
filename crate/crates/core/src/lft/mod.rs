//! Linear fractional transformations of real parameters.

mod export;
mod expr;
mod lift;
mod matrix;
mod param;
mod reduce;
mod rotation;

pub use export::{format_number, output_precision, DeltaEntry, LftExport, NumMatrix, LFT_FORMAT, PRECISION_ENV};
pub use expr::Expr;
pub use lift::{compose, interconnect, lift_matrix, lift_scalar, Wiring};
pub use matrix::{BoundsMode, LftMatrix, Mat};
pub use param::{AngleVariant, HalfTanParam, Param, ParamKind, ParamSet, Point};
pub use reduce::RANK_TOL;
pub use rotation::{rotation_lft, rotation_lft_half, rotation_lft_quarter};

pub(crate) use matrix::{bdiag, hcat, rcond};
