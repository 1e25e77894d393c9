//! JSON export of LFT matrices.

use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::matrix::{LftMatrix, Mat};
use super::param::Param;
use crate::error::{Error, Result};

pub const LFT_FORMAT: &str = "lft-matrix/1";

/// Environment variable selecting the number of significant digits written.
pub const PRECISION_ENV: &str = "LFTMB_PRECISION";

/// Significant digits for exported numbers: 15 by default, clamped to 15..=17.
pub fn output_precision() -> usize {
    std::env::var(PRECISION_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(15)
        .clamp(15, 17)
}

pub fn format_number(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0.0".to_string();
    }
    format!("{:.*e}", digits - 1, v)
}

/// Row-major real matrix written with a fixed number of significant digits.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(transparent)]
pub struct NumMatrix(pub Vec<Vec<f64>>);

impl Serialize for NumMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let digits = output_precision();
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for row in &self.0 {
            let cells: Vec<Box<RawValue>> = row
                .iter()
                .map(|&v| {
                    RawValue::from_string(format_number(v, digits))
                        .map_err(serde::ser::Error::custom)
                })
                .collect::<std::result::Result<_, _>>()?;
            seq.serialize_element(&cells)?;
        }
        seq.end()
    }
}

impl NumMatrix {
    pub fn from_mat(m: &Mat) -> Self {
        NumMatrix(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect(),
        )
    }

    pub fn to_mat(&self, rows: usize, cols: usize) -> Result<Mat> {
        if self.0.len() != rows || self.0.iter().any(|r| r.len() != cols) {
            return Err(Error::model(format!("matrix data is not {rows}x{cols}")));
        }
        Ok(Mat::from_fn(rows, cols, |i, j| self.0[i][j]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaEntry {
    pub param: String,
    pub repetitions: usize,
}

/// Serialized form of an [`LftMatrix`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LftExport {
    pub format: String,
    pub rows: usize,
    pub cols: usize,
    /// Always `center-spread`: `p = (lower + upper)/2 + (upper - lower)/2 * delta`.
    pub normalization: String,
    pub delta_structure: Vec<DeltaEntry>,
    pub parameters: Vec<Param>,
    /// `(rows + d) x (cols + d)` coefficient matrix, row-major.
    pub m: NumMatrix,
}

impl LftExport {
    pub fn from_lft(l: &LftMatrix) -> Self {
        LftExport {
            format: LFT_FORMAT.to_string(),
            rows: l.nrows(),
            cols: l.ncols(),
            normalization: "center-spread".to_string(),
            delta_structure: l
                .delta_structure()
                .into_iter()
                .map(|(param, repetitions)| DeltaEntry { param, repetitions })
                .collect(),
            parameters: l.params().cloned().collect(),
            m: NumMatrix::from_mat(l.coefficients()),
        }
    }

    pub fn to_lft(&self) -> Result<LftMatrix> {
        if self.format != LFT_FORMAT {
            return Err(Error::model(format!("unsupported LFT format `{}`", self.format)));
        }
        let d: usize = self.delta_structure.iter().map(|e| e.repetitions).sum();
        let m = self.m.to_mat(self.rows + d, self.cols + d)?;
        let structure: Vec<(String, usize)> = self
            .delta_structure
            .iter()
            .map(|e| (e.param.clone(), e.repetitions))
            .collect();
        LftMatrix::from_raw(self.rows, self.cols, m, &structure, &self.parameters)
    }
}

impl LftMatrix {
    pub fn to_export(&self) -> LftExport {
        LftExport::from_lft(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_export())?)
    }

    pub fn from_json(s: &str) -> Result<LftMatrix> {
        let e: LftExport = serde_json::from_str(s)?;
        e.to_lft()
    }
}
