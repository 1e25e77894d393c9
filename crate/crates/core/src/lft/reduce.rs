//! Structural order reduction of LFTs.
//!
//! Each repeated-scalar block `delta_i * I_k` commutes with any `k x k`
//! matrix, so rank-deficient coupling inside a block can be projected out
//! exactly: if the rows of the block (its output coupling) span only `r < k`
//! directions, the block shrinks to `r` channels, and dually for columns.
//! Channels with identically zero coupling are the `r = 0` case. The
//! retained directions are the Krylov closure of the block under its own
//! feedback term, so the projection is exact.

use super::matrix::{LftMatrix, Mat};

/// Singular values below `RANK_TOL * max(1, sigma_max)` count as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Replace the channel range `s..e` by `left * (.)` on rows and `(.) * right`
/// on columns; `left` is `q x k`, `right` is `k x q`.
fn transform_block(m: &Mat, r: usize, c: usize, s: usize, e: usize, left: &Mat, right: &Mat) -> Mat {
    let d = m.nrows() - r;
    let k = e - s;
    let q = left.nrows();
    let nd = d - k + q;
    // rows
    let mut rows = Mat::zeros(r + nd, c + d);
    rows.view_mut((0, 0), (r + s, c + d))
        .copy_from(&m.view((0, 0), (r + s, c + d)));
    rows.view_mut((r + s, 0), (q, c + d))
        .copy_from(&(left * m.view((r + s, 0), (k, c + d))));
    rows.view_mut((r + s + q, 0), (d - e, c + d))
        .copy_from(&m.view((r + e, 0), (d - e, c + d)));
    // columns
    let mut out = Mat::zeros(r + nd, c + nd);
    out.view_mut((0, 0), (r + nd, c + s))
        .copy_from(&rows.view((0, 0), (r + nd, c + s)));
    out.view_mut((0, c + s), (r + nd, q))
        .copy_from(&(rows.view((0, c + s), (r + nd, k)) * right));
    out.view_mut((0, c + s + q), (r + nd, d - e))
        .copy_from(&rows.view((0, c + e), (r + nd, d - e)));
    out
}

/// Orthonormal basis (as columns) of the dominant left singular space.
fn range_basis(a: &Mat) -> Mat {
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("svd u");
    let sv = &svd.singular_values;
    let smax = if sv.is_empty() { 0.0 } else { sv.max() };
    let tol = RANK_TOL * smax.max(1.0);
    let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > tol).collect();
    Mat::from_fn(a.nrows(), keep.len(), |i, j| u[(i, keep[j])])
}

impl LftMatrix {
    /// Structurally reduced, evaluation-equivalent LFT. Occurrence counts of
    /// every parameter are non-increasing.
    pub fn reduce(&self) -> LftMatrix {
        let mut cur = self.balanced();
        loop {
            let before = cur.order();
            cur = cur.reduce_pass();
            if cur.order() == before {
                return cur;
            }
        }
    }

    /// Diagonal channel scaling equalizing each channel's row and column
    /// norms. Powers of two keep the scaling exact.
    fn balanced(&self) -> LftMatrix {
        let (r, c) = self.shape();
        let mut m = self.coefficients().clone();
        let d = m.nrows() - r;
        for _ in 0..8 {
            let mut changed = false;
            for k in 0..d {
                let row = m.row(r + k).norm();
                let col = m.column(c + k).norm();
                if row == 0.0 || col == 0.0 {
                    continue;
                }
                let f = (row / col).sqrt().log2().round();
                if f != 0.0 {
                    let s = f.exp2();
                    m.row_mut(r + k).scale_mut(1.0 / s);
                    m.column_mut(c + k).scale_mut(s);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        self.with_coefficients(m, self.channel_params().to_vec())
    }

    fn reduce_pass(&self) -> LftMatrix {
        let (r, c) = self.shape();
        let mut m = self.coefficients().clone();
        let mut chan = self.channel_params().to_vec();
        let mut s = 0;
        while s < chan.len() {
            let p = chan[s];
            let mut e = s;
            while e < chan.len() && chan[e] == p {
                e += 1;
            }
            // reachable part of the block, then its observable part
            for dual in [false, true] {
                if e == s {
                    break;
                }
                let basis = block_krylov(&m, r, c, s, e, dual);
                if basis.ncols() < e - s {
                    m = transform_block(&m, r, c, s, e, &basis.transpose(), &basis);
                    let q = basis.ncols();
                    chan.drain(s + q..e);
                    e = s + q;
                }
            }
            s = e;
        }
        self.with_coefficients(m, chan)
    }
}

/// Smallest `M_ii`-invariant subspace containing the coupling of block
/// `s..e` from every other channel and input (or, with `dual`, the transposed
/// statement for outputs).
fn block_krylov(m: &Mat, r: usize, c: usize, s: usize, e: usize, dual: bool) -> Mat {
    let m = if dual { m.transpose() } else { m.clone() };
    let (r, c) = if dual { (c, r) } else { (r, c) };
    let d = m.nrows() - r;
    let k = e - s;
    let own = m.view((r + s, c + s), (k, k)).into_owned();
    let others: Vec<usize> = (0..c + d).filter(|&j| j < c + s || j >= c + e).collect();
    let g = Mat::from_fn(k, others.len(), |i, j| m[(r + s + i, others[j])]);
    let mut basis = range_basis(&g);
    loop {
        if basis.ncols() == k || basis.ncols() == 0 {
            return basis;
        }
        // new directions of F V, judged relative to each column of F V
        let mut w = &own * &basis;
        normalize_columns(&mut w);
        let resid = &w - &basis * (basis.transpose() * &w);
        let fresh = range_basis(&resid);
        if fresh.ncols() == 0 {
            return basis;
        }
        basis = range_basis(&hcat2(&basis, &fresh));
    }
}

fn normalize_columns(a: &mut Mat) {
    for mut col in a.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
}

fn hcat2(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}
