//! Matrix-valued linear fractional transformations.
//!
//! An [`LftMatrix`] of size `rows x cols` stores a coefficient matrix
//!
//! ```text
//!     M = [ M11  M12 ]   (rows + d) x (cols + d)
//!         [ M21  M22 ]
//! ```
//!
//! and one parameter per perturbation channel. Its value at a point is
//! `M11 + M12 * D * (I - M22 * D)^-1 * M21`, where `D` is the diagonal of the
//! normalized parameter values, one entry per channel. Channels are kept
//! grouped by parameter so that `D` is block diagonal with repeated scalars.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::param::{Param, ParamKind, ParamSet, Point};

pub type Mat = DMatrix<f64>;

/// How evaluation treats points outside the parameter box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BoundsMode {
    /// Log a warning and evaluate anyway.
    #[default]
    Warn,
    /// Refuse to evaluate.
    Strict,
}

#[derive(Clone, Debug)]
pub struct LftMatrix {
    rows: usize,
    cols: usize,
    m: Mat,
    params: Vec<Arc<Param>>,
    chan: Vec<usize>,
}

pub(crate) fn hcat(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.nrows(), b.nrows(), "hcat row mismatch");
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

pub(crate) fn vcat(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.ncols(), b.ncols(), "vcat column mismatch");
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

pub(crate) fn bdiag(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

fn kron_eye(a: &Mat, n: usize) -> Mat {
    let mut out = Mat::zeros(a.nrows() * n, a.ncols() * n);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let v = a[(i, j)];
            if v != 0.0 {
                for k in 0..n {
                    out[(i * n + k, j * n + k)] = v;
                }
            }
        }
    }
    out
}

/// Union of two sorted parameter lists, with index maps from each input.
fn merge_params(a: &[Arc<Param>], b: &[Arc<Param>]) -> (Vec<Arc<Param>>, Vec<usize>, Vec<usize>) {
    let mut merged: Vec<Arc<Param>> = Vec::with_capacity(a.len() + b.len());
    let (mut ia, mut ib) = (0, 0);
    let mut map_a = vec![0; a.len()];
    let mut map_b = vec![0; b.len()];
    while ia < a.len() || ib < b.len() {
        let take_a = ib >= b.len() || (ia < a.len() && a[ia].name <= b[ib].name);
        let take_b = ia >= a.len() || (ib < b.len() && b[ib].name <= a[ia].name);
        if take_a && take_b {
            assert!(
                *a[ia] == *b[ib],
                "parameter `{}` defined twice with different data",
                a[ia].name
            );
        }
        let idx = merged.len();
        if take_a {
            merged.push(a[ia].clone());
            map_a[ia] = idx;
            ia += 1;
        }
        if take_b {
            if !take_a {
                merged.push(b[ib].clone());
            }
            map_b[ib] = idx;
            ib += 1;
        }
    }
    (merged, map_a, map_b)
}

impl LftMatrix {
    /// Assemble from partitioned blocks; channels are regrouped by parameter.
    fn from_parts(
        rows: usize,
        cols: usize,
        m: Mat,
        params: Vec<Arc<Param>>,
        chan: Vec<usize>,
    ) -> Self {
        debug_assert_eq!(m.nrows(), rows + chan.len());
        debug_assert_eq!(m.ncols(), cols + chan.len());
        let mut out = LftMatrix {
            rows,
            cols,
            m,
            params,
            chan,
        };
        out.canonicalize();
        out
    }

    fn canonicalize(&mut self) {
        let d = self.chan.len();
        let sorted = self.chan.windows(2).all(|w| w[0] <= w[1]);
        if !sorted {
            let mut perm: Vec<usize> = (0..d).collect();
            perm.sort_by_key(|&k| self.chan[k]);
            let (r, c) = (self.rows, self.cols);
            let mut m = Mat::zeros(r + d, c + d);
            let src_row = |i: usize| if i < r { i } else { r + perm[i - r] };
            let src_col = |j: usize| if j < c { j } else { c + perm[j - c] };
            for i in 0..r + d {
                let si = src_row(i);
                for j in 0..c + d {
                    m[(i, j)] = self.m[(si, src_col(j))];
                }
            }
            self.chan = perm.iter().map(|&k| self.chan[k]).collect();
            self.m = m;
        }
        // drop parameters without channels
        let mut used = vec![false; self.params.len()];
        for &c in &self.chan {
            used[c] = true;
        }
        if used.iter().any(|u| !u) {
            let mut remap = vec![usize::MAX; self.params.len()];
            let mut kept = Vec::new();
            for (i, p) in self.params.iter().enumerate() {
                if used[i] {
                    remap[i] = kept.len();
                    kept.push(p.clone());
                }
            }
            for c in &mut self.chan {
                *c = remap[*c];
            }
            self.params = kept;
        }
    }

    // ---- constructors ------------------------------------------------------

    pub fn constant(value: Mat) -> Self {
        LftMatrix {
            rows: value.nrows(),
            cols: value.ncols(),
            m: value,
            params: Vec::new(),
            chan: Vec::new(),
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::constant(Mat::from_element(1, 1, v))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(Mat::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(Mat::identity(n, n))
    }

    /// The 1x1 LFT of a single parameter: one channel.
    pub fn param(p: &Param) -> Self {
        let m = Mat::from_row_slice(2, 2, &[p.center(), p.spread(), 1.0, 0.0]);
        LftMatrix {
            rows: 1,
            cols: 1,
            m,
            params: vec![Arc::new(p.clone())],
            chan: vec![0],
        }
    }

    // ---- accessors ----------------------------------------------------------

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Total size of the perturbation block.
    pub fn order(&self) -> usize {
        self.chan.len()
    }

    pub fn is_constant(&self) -> bool {
        self.chan.is_empty()
    }

    /// Full coefficient matrix.
    pub fn coefficients(&self) -> &Mat {
        &self.m
    }

    pub fn params(&self) -> impl Iterator<Item = &Param> {
        self.params.iter().map(|p| p.as_ref())
    }

    pub(crate) fn channel_params(&self) -> &[usize] {
        &self.chan
    }

    /// Ordered `(parameter, repetitions)` list describing the block structure.
    pub fn delta_structure(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for &c in &self.chan {
            let name = &self.params[c].name;
            match out.last_mut() {
                Some((n, k)) if n == name => *k += 1,
                _ => out.push((name.clone(), 1)),
            }
        }
        out
    }

    /// Number of occurrences of every parameter.
    pub fn occurrences(&self) -> BTreeMap<String, usize> {
        self.delta_structure().into_iter().collect()
    }

    pub fn occurrences_of(&self, name: &str) -> usize {
        self.occurrences().get(name).copied().unwrap_or(0)
    }

    /// Occurrences grouped by block kind.
    pub fn order_by_kind(&self) -> BTreeMap<ParamKind, usize> {
        let mut out = BTreeMap::new();
        for &c in &self.chan {
            *out.entry(self.params[c].kind).or_insert(0) += 1;
        }
        out
    }

    pub fn m11(&self) -> Mat {
        self.m.view((0, 0), (self.rows, self.cols)).into_owned()
    }
    pub fn m12(&self) -> Mat {
        self.m.view((0, self.cols), (self.rows, self.order())).into_owned()
    }
    pub fn m21(&self) -> Mat {
        self.m.view((self.rows, 0), (self.order(), self.cols)).into_owned()
    }
    pub fn m22(&self) -> Mat {
        self.m
            .view((self.rows, self.cols), (self.order(), self.order()))
            .into_owned()
    }

    // ---- evaluation ---------------------------------------------------------

    /// Normalized channel values at a point.
    fn channel_deltas(&self, point: &Point, mode: BoundsMode) -> Result<Vec<f64>> {
        let mut per_param = Vec::with_capacity(self.params.len());
        for p in &self.params {
            let v = *point
                .get(&p.name)
                .ok_or_else(|| Error::MissingParam(p.name.clone()))?;
            if !p.contains(v) {
                match mode {
                    BoundsMode::Strict => {
                        return Err(Error::OutOfBounds {
                            name: p.name.clone(),
                            value: v,
                            lower: p.lower,
                            upper: p.upper,
                        })
                    }
                    BoundsMode::Warn => log::warn!(
                        "parameter `{}` = {v} outside [{}, {}]",
                        p.name,
                        p.lower,
                        p.upper
                    ),
                }
            }
            per_param.push(p.normalize(v));
        }
        Ok(self.chan.iter().map(|&c| per_param[c]).collect())
    }

    pub fn evaluate(&self, point: &Point) -> Result<Mat> {
        self.evaluate_with(point, BoundsMode::Warn)
    }

    pub fn evaluate_with(&self, point: &Point, mode: BoundsMode) -> Result<Mat> {
        let deltas = self.channel_deltas(point, mode)?;
        self.evaluate_normalized(&deltas)
    }

    /// Evaluate with all parameters at their nominal values.
    pub fn nominal(&self) -> Mat {
        let deltas: Vec<f64> = self
            .chan
            .iter()
            .map(|&c| self.params[c].normalize(self.params[c].nominal))
            .collect();
        self.evaluate_normalized(&deltas)
            .expect("LFT ill-posed at its nominal point")
    }

    /// Evaluate from channel-wise normalized values.
    pub fn evaluate_normalized(&self, deltas: &[f64]) -> Result<Mat> {
        let d = self.order();
        assert_eq!(deltas.len(), d);
        let m11 = self.m11();
        if d == 0 {
            return Ok(m11);
        }
        let (m12, m21, m22) = (self.m12(), self.m21(), self.m22());
        // I - M22 * D
        let mut lhs = Mat::identity(d, d);
        for i in 0..d {
            for j in 0..d {
                lhs[(i, j)] -= m22[(i, j)] * deltas[j];
            }
        }
        let x = solve_checked(lhs, &m21, "in LFT evaluation")?;
        // M12 * D * x
        let mut m12d = m12;
        for j in 0..d {
            let s = deltas[j];
            m12d.column_mut(j).scale_mut(s);
        }
        Ok(m11 + m12d * x)
    }

    /// Check that the LFT is well posed at the nominal point.
    pub fn check_well_posed(&self) -> Result<()> {
        let deltas: Vec<f64> = self
            .chan
            .iter()
            .map(|&c| self.params[c].normalize(self.params[c].nominal))
            .collect();
        self.evaluate_normalized(&deltas).map(|_| ())
    }

    // ---- algebra --------------------------------------------------------------

    pub fn add(&self, other: &LftMatrix) -> LftMatrix {
        assert_eq!(self.shape(), other.shape(), "add: shape mismatch");
        let (params, ma, mb) = merge_params(&self.params, &other.params);
        let (r, c) = self.shape();
        let m11 = self.m11() + other.m11();
        let m12 = hcat(&self.m12(), &other.m12());
        let m21 = vcat(&self.m21(), &other.m21());
        let m22 = bdiag(&self.m22(), &other.m22());
        let m = vcat(&hcat(&m11, &m12), &hcat(&m21, &m22));
        let chan = self
            .chan
            .iter()
            .map(|&k| ma[k])
            .chain(other.chan.iter().map(|&k| mb[k]))
            .collect();
        LftMatrix::from_parts(r, c, m, params, chan)
    }

    pub fn sub(&self, other: &LftMatrix) -> LftMatrix {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> LftMatrix {
        self.scale(-1.0)
    }

    pub fn scale(&self, s: f64) -> LftMatrix {
        let mut out = self.clone();
        let (r, c) = (self.rows, self.cols);
        let d = self.order();
        out.m.view_mut((0, 0), (r, c + d)).scale_mut(s);
        out
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &LftMatrix) -> LftMatrix {
        assert_eq!(self.cols, other.rows, "mul: inner dimension mismatch");
        if other.is_constant() {
            return self.mul_const_right(&other.m);
        }
        if self.is_constant() {
            return other.mul_const_left(&self.m);
        }
        let (params, ma, mb) = merge_params(&self.params, &other.params);
        let (a11, a12, a21, a22) = (self.m11(), self.m12(), self.m21(), self.m22());
        let (b11, b12, b21, b22) = (other.m11(), other.m12(), other.m21(), other.m22());
        let m11 = &a11 * &b11;
        let m12 = hcat(&a12, &(&a11 * &b12));
        let m21 = vcat(&(&a21 * &b11), &b21);
        let top = hcat(&a22, &(&a21 * &b12));
        let bot = hcat(&Mat::zeros(other.order(), self.order()), &b22);
        let m22 = vcat(&top, &bot);
        let m = vcat(&hcat(&m11, &m12), &hcat(&m21, &m22));
        let chan = self
            .chan
            .iter()
            .map(|&k| ma[k])
            .chain(other.chan.iter().map(|&k| mb[k]))
            .collect();
        LftMatrix::from_parts(self.rows, other.cols, m, params, chan)
    }

    /// `k * self` for a constant matrix `k`.
    pub fn mul_const_left(&self, k: &Mat) -> LftMatrix {
        assert_eq!(k.ncols(), self.rows, "mul_const_left: dimension mismatch");
        let d = self.order();
        let top = k * self.m.view((0, 0), (self.rows, self.cols + d));
        let bottom = self.m.view((self.rows, 0), (d, self.cols + d)).into_owned();
        LftMatrix {
            rows: k.nrows(),
            cols: self.cols,
            m: vcat(&top, &bottom),
            params: self.params.clone(),
            chan: self.chan.clone(),
        }
    }

    /// `self * k` for a constant matrix `k`.
    pub fn mul_const_right(&self, k: &Mat) -> LftMatrix {
        assert_eq!(k.nrows(), self.cols, "mul_const_right: dimension mismatch");
        let d = self.order();
        let left = self.m.view((0, 0), (self.rows + d, self.cols)) * k;
        let right = self.m.view((0, self.cols), (self.rows + d, d)).into_owned();
        LftMatrix {
            rows: self.rows,
            cols: k.ncols(),
            m: hcat(&left, &right),
            params: self.params.clone(),
            chan: self.chan.clone(),
        }
    }

    /// Matrix inverse. Requires the value at the box center and at the
    /// nominal point to be invertible.
    pub fn inv(&self) -> Result<LftMatrix> {
        assert_eq!(self.rows, self.cols, "inv: matrix not square");
        let n = self.rows;
        let nominal = self.nominal();
        if nominal.clone().lu().try_inverse().is_none() || rcond(&nominal) < 1e-14 {
            return Err(Error::Singular {
                what: format!("{n}x{n} LFT matrix at the nominal point"),
            });
        }
        let a11_inv = invert_checked(self.m11(), "LFT matrix at the box center")?;
        let (a12, a21, a22) = (self.m12(), self.m21(), self.m22());
        let m11 = a11_inv.clone();
        let m12 = -(&a11_inv * &a12);
        let m21 = &a21 * &a11_inv;
        let m22 = a22 - &m21 * &a12;
        let m = vcat(&hcat(&m11, &m12), &hcat(&m21, &m22));
        Ok(LftMatrix {
            rows: n,
            cols: n,
            m,
            params: self.params.clone(),
            chan: self.chan.clone(),
        })
    }

    pub fn transpose(&self) -> LftMatrix {
        LftMatrix {
            rows: self.cols,
            cols: self.rows,
            m: self.m.transpose(),
            params: self.params.clone(),
            chan: self.chan.clone(),
        }
    }

    /// `[self, other]`
    pub fn hstack(&self, other: &LftMatrix) -> LftMatrix {
        assert_eq!(self.rows, other.rows, "hstack: row mismatch");
        let (params, ma, mb) = merge_params(&self.params, &other.params);
        let m11 = hcat(&self.m11(), &other.m11());
        let m12 = hcat(&self.m12(), &other.m12());
        let m21 = bdiag(&self.m21(), &other.m21());
        let m22 = bdiag(&self.m22(), &other.m22());
        let m = vcat(&hcat(&m11, &m12), &hcat(&m21, &m22));
        let chan = self
            .chan
            .iter()
            .map(|&k| ma[k])
            .chain(other.chan.iter().map(|&k| mb[k]))
            .collect();
        LftMatrix::from_parts(self.rows, self.cols + other.cols, m, params, chan)
    }

    /// `[self; other]`
    pub fn vstack(&self, other: &LftMatrix) -> LftMatrix {
        self.transpose().hstack(&other.transpose()).transpose()
    }

    pub fn block_diag(&self, other: &LftMatrix) -> LftMatrix {
        let top = self.hstack(&LftMatrix::zeros(self.rows, other.cols));
        let bot = LftMatrix::zeros(other.rows, self.cols).hstack(other);
        top.vstack(&bot)
    }

    /// Assemble from a grid of blocks (rows of equally tall blocks).
    pub fn from_blocks(grid: &[Vec<LftMatrix>]) -> LftMatrix {
        let rows: Vec<LftMatrix> = grid
            .iter()
            .map(|row| {
                let mut it = row.iter();
                let first = it.next().expect("empty block row").clone();
                it.fold(first, |acc, b| acc.hstack(b))
            })
            .collect();
        let mut it = rows.into_iter();
        let first = it.next().expect("empty block grid");
        it.fold(first, |acc, b| acc.vstack(&b))
    }

    pub fn vstack_all(items: &[LftMatrix]) -> LftMatrix {
        let mut it = items.iter();
        let first = it.next().expect("empty stack").clone();
        it.fold(first, |acc, b| acc.vstack(b))
    }

    pub fn hstack_all(items: &[LftMatrix]) -> LftMatrix {
        let mut it = items.iter();
        let first = it.next().expect("empty stack").clone();
        it.fold(first, |acc, b| acc.hstack(b))
    }

    pub fn select_rows(&self, idx: &[usize]) -> LftMatrix {
        let sel = Mat::from_fn(idx.len(), self.rows, |i, j| (idx[i] == j) as u8 as f64);
        self.mul_const_left(&sel)
    }

    pub fn select_cols(&self, idx: &[usize]) -> LftMatrix {
        let sel = Mat::from_fn(self.cols, idx.len(), |i, j| (idx[j] == i) as u8 as f64);
        self.mul_const_right(&sel)
    }

    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> LftMatrix {
        let rows: Vec<usize> = (r0..r0 + nr).collect();
        let cols: Vec<usize> = (c0..c0 + nc).collect();
        self.select_rows(&rows).select_cols(&cols)
    }

    /// `self (x) I_n`: every entry becomes an `n x n` scaled identity.
    pub fn kron_identity(&self, n: usize) -> LftMatrix {
        let (r, c) = (self.rows, self.cols);
        let blocks = [
            kron_eye(&self.m11(), n),
            kron_eye(&self.m12(), n),
            kron_eye(&self.m21(), n),
            kron_eye(&self.m22(), n),
        ];
        let m = vcat(&hcat(&blocks[0], &blocks[1]), &hcat(&blocks[2], &blocks[3]));
        let chan = self
            .chan
            .iter()
            .flat_map(|&k| std::iter::repeat(k).take(n))
            .collect();
        LftMatrix::from_parts(r * n, c * n, m, self.params.clone(), chan)
    }

    /// Scalar (1x1) LFT times a constant matrix, using a rank factorization of
    /// the constant so that the scalar is repeated only `rank(k)` times.
    pub fn scalar_times(&self, k: &Mat) -> LftMatrix {
        assert_eq!(self.shape(), (1, 1), "scalar_times needs a 1x1 LFT");
        if self.is_constant() {
            return LftMatrix::constant(k * self.m[(0, 0)]);
        }
        let svd = k.clone().svd(true, true);
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let smax = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > 1e-14 * smax.max(1e-300))
            .collect();
        if keep.is_empty() {
            return LftMatrix::zeros(k.nrows(), k.ncols());
        }
        let r = keep.len();
        let left = Mat::from_fn(k.nrows(), r, |i, j| u[(i, keep[j])] * svd.singular_values[keep[j]]);
        let right = Mat::from_fn(r, k.ncols(), |i, j| vt[(keep[i], j)]);
        self.kron_identity(r)
            .mul_const_left(&left)
            .mul_const_right(&right)
    }

    /// Elementwise `self` entry (i, j) as a 1x1 LFT.
    pub fn entry(&self, i: usize, j: usize) -> LftMatrix {
        self.select_rows(&[i]).select_cols(&[j])
    }

    /// All parameters referenced, in name order.
    pub fn param_set(&self) -> ParamSet {
        let mut s = ParamSet::new();
        for p in &self.params {
            s.insert(p.as_ref().clone()).expect("unique parameters");
        }
        s
    }

    /// Rebuild from raw coefficient data (used by the importer).
    pub fn from_raw(
        rows: usize,
        cols: usize,
        m: Mat,
        structure: &[(String, usize)],
        params: &[Param],
    ) -> Result<Self> {
        let mut plist: Vec<Arc<Param>> = params.iter().cloned().map(Arc::new).collect();
        plist.sort_by(|a, b| a.name.cmp(&b.name));
        let mut chan = Vec::new();
        for (name, reps) in structure {
            let idx = plist
                .iter()
                .position(|p| &p.name == name)
                .ok_or_else(|| Error::MissingParam(name.clone()))?;
            chan.extend(std::iter::repeat(idx).take(*reps));
        }
        if m.nrows() != rows + chan.len() || m.ncols() != cols + chan.len() {
            return Err(Error::model(format!(
                "coefficient matrix is {}x{}, expected {}x{}",
                m.nrows(),
                m.ncols(),
                rows + chan.len(),
                cols + chan.len()
            )));
        }
        Ok(LftMatrix::from_parts(rows, cols, m, plist, chan))
    }

    /// Same channels, new outer shape and coefficients.
    pub(crate) fn with_outer(&self, rows: usize, cols: usize, m: Mat) -> LftMatrix {
        LftMatrix::from_parts(rows, cols, m, self.params.clone(), self.chan.clone())
    }

    pub(crate) fn with_coefficients(&self, m: Mat, chan: Vec<usize>) -> LftMatrix {
        LftMatrix::from_parts(self.rows, self.cols, m, self.params.clone(), chan)
    }
}

/// Reciprocal 2-norm condition number estimate.
pub(crate) fn rcond(a: &Mat) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let sv = a.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

pub(crate) fn solve_checked(lhs: Mat, rhs: &Mat, context: &str) -> Result<Mat> {
    let rc = rcond(&lhs);
    if rc < 1e-15 {
        return Err(Error::IllPosed {
            rcond: rc,
            context: context.to_string(),
        });
    }
    lhs.lu().solve(rhs).ok_or_else(|| Error::IllPosed {
        rcond: rc,
        context: context.to_string(),
    })
}

pub(crate) fn invert_checked(a: Mat, what: &str) -> Result<Mat> {
    let rc = rcond(&a);
    if rc < 1e-15 {
        return Err(Error::Singular {
            what: format!("{what} (reciprocal condition {rc:.3e})"),
        });
    }
    a.try_inverse().ok_or_else(|| Error::Singular {
        what: what.to_string(),
    })
}

macro_rules! lft_binop {
    ($tr:ident, $m:ident, $f:ident) => {
        impl std::ops::$tr<&LftMatrix> for &LftMatrix {
            type Output = LftMatrix;
            fn $m(self, rhs: &LftMatrix) -> LftMatrix {
                self.$f(rhs)
            }
        }
        impl std::ops::$tr<LftMatrix> for LftMatrix {
            type Output = LftMatrix;
            fn $m(self, rhs: LftMatrix) -> LftMatrix {
                (&self).$f(&rhs)
            }
        }
    };
}
lft_binop!(Add, add, add);
lft_binop!(Sub, sub, sub);
lft_binop!(Mul, mul, mul);

impl std::ops::Neg for &LftMatrix {
    type Output = LftMatrix;
    fn neg(self) -> LftMatrix {
        LftMatrix::neg(self)
    }
}
