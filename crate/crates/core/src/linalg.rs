//! Dense symmetric positive-definite kernels.
//!
//! Every matrix that has to be "inverted" in this crate is SPD: `I - A^2`,
//! `I + A`, `I - [A^2]_{S'}`, and (exact or empirical) correlation blocks. A
//! blocked Cholesky factorization with GEMM trailing updates covers all of
//! them at close to matrix-multiply throughput.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};

const BLOCK: usize = 96;

/// Lower Cholesky factor `L` with `L L^T = A`. Only the lower triangle of the
/// input is read.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::ShapeMismatch {
                expected: (n, n),
                found: a.dim(),
            });
        }
        let mut l = a.as_standard_layout().into_owned();
        let mut k0 = 0;
        while k0 < n {
            let k1 = (k0 + BLOCK).min(n);
            factor_diagonal_block(&mut l, k0, k1)?;
            if k1 < n {
                let diag = l.slice(s![k0..k1, k0..k1]).to_owned();
                let (mut panel, mut trailing) =
                    l.multi_slice_mut((s![k1.., k0..k1], s![k1.., k1..]));
                solve_panel(diag.view(), &mut panel);
                update_trailing_lower(panel.view(), &mut trailing);
            }
            k0 = k1;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                l[[i, j]] = 0.0;
            }
        }
        Ok(Self { l })
    }

    /// Like [`Cholesky::factor`], but also rejects numerically singular
    /// matrices: every pivot must exceed `dim * eps * max_diag`.
    pub fn factor_nonsingular(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        let max_diag = a.diag().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let chol = Self::factor(a)?;
        let floor = n as f64 * f64::EPSILON * max_diag;
        for i in 0..n {
            let d = chol.l[[i, i]];
            if !(d * d > floor) {
                return Err(Error::NotPositiveDefinite { pivot: i });
            }
        }
        Ok(chol)
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> ArrayView2<'_, f64> {
        self.l.view()
    }

    /// Solves `A X = B` in place.
    pub fn solve_in_place(&self, mut b: ArrayViewMut2<f64>) {
        solve_lower(self.l.view(), b.view_mut());
        solve_lower_transposed(self.l.view(), b);
    }

    pub fn solve(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let mut x = b.as_standard_layout().into_owned();
        self.solve_in_place(x.view_mut());
        x
    }

    /// Explicit inverse, symmetrized.
    pub fn inverse(&self) -> Array2<f64> {
        let mut x = Array2::<f64>::eye(self.dim());
        self.solve_in_place(x.view_mut());
        symmetrize(&mut x);
        x
    }

    /// Solves `L^T X = B` in place. With `z ~ N(0, I)`, `L^{-T} z ~ N(0, A^{-1})`.
    pub fn solve_upper_in_place(&self, b: ArrayViewMut2<f64>) {
        solve_lower_transposed(self.l.view(), b);
    }
}

fn factor_diagonal_block(l: &mut Array2<f64>, k0: usize, k1: usize) -> Result<()> {
    for j in k0..k1 {
        let mut d = l[[j, j]];
        for p in k0..j {
            d -= l[[j, p]] * l[[j, p]];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..k1 {
            let mut v = l[[i, j]];
            for p in k0..j {
                v -= l[[i, p]] * l[[j, p]];
            }
            l[[i, j]] = v / d;
        }
    }
    Ok(())
}

/// `panel <- panel * diag^{-T}` row by row.
fn solve_panel(diag: ArrayView2<f64>, panel: &mut ArrayViewMut2<f64>) {
    let b = diag.nrows();
    for mut row in panel.rows_mut() {
        for j in 0..b {
            let mut v = row[j];
            for p in 0..j {
                v -= row[p] * diag[[j, p]];
            }
            row[j] = v / diag[[j, j]];
        }
    }
}

/// `trailing -= panel * panel^T`, touching only block rows' lower parts.
fn update_trailing_lower(panel: ArrayView2<f64>, trailing: &mut ArrayViewMut2<f64>) {
    let m = trailing.nrows();
    let mut r0 = 0;
    while r0 < m {
        let r1 = (r0 + BLOCK).min(m);
        let lhs = panel.slice(s![r0..r1, ..]);
        let rhs = panel.slice(s![..r1, ..]);
        let mut dst = trailing.slice_mut(s![r0..r1, ..r1]);
        general_mat_mul(-1.0, &lhs, &rhs.t(), 1.0, &mut dst);
        r0 = r1;
    }
}

/// Forward substitution `L X = B`, blocked over rows of `B`.
pub fn solve_lower(l: ArrayView2<f64>, mut b: ArrayViewMut2<f64>) {
    let n = l.nrows();
    let mut k0 = 0;
    while k0 < n {
        let k1 = (k0 + BLOCK).min(n);
        for i in k0..k1 {
            for p in k0..i {
                let c = l[[i, p]];
                if c != 0.0 {
                    let (src, mut dst) = b.multi_slice_mut((s![p, ..], s![i, ..]));
                    dst.scaled_add(-c, &src);
                }
            }
            let d = l[[i, i]];
            b.row_mut(i).mapv_inplace(|v| v / d);
        }
        if k1 < n {
            let (solved, mut rest) = b.multi_slice_mut((s![k0..k1, ..], s![k1.., ..]));
            general_mat_mul(-1.0, &l.slice(s![k1.., k0..k1]), &solved, 1.0, &mut rest);
        }
        k0 = k1;
    }
}

/// Back substitution `L^T X = B`, blocked over rows of `B`.
pub fn solve_lower_transposed(l: ArrayView2<f64>, mut b: ArrayViewMut2<f64>) {
    let n = l.nrows();
    let mut k1 = n;
    while k1 > 0 {
        let k0 = k1.saturating_sub(BLOCK);
        for i in (k0..k1).rev() {
            for p in (i + 1)..k1 {
                let c = l[[p, i]];
                if c != 0.0 {
                    let (src, mut dst) = b.multi_slice_mut((s![p, ..], s![i, ..]));
                    dst.scaled_add(-c, &src);
                }
            }
            let d = l[[i, i]];
            b.row_mut(i).mapv_inplace(|v| v / d);
        }
        if k0 > 0 {
            let (mut rest, solved) = b.multi_slice_mut((s![..k0, ..], s![k0..k1, ..]));
            general_mat_mul(-1.0, &l.slice(s![k0..k1, ..k0]).t(), &solved, 1.0, &mut rest);
        }
        k1 = k0;
    }
}

/// Replaces `m` by `(m + m^T) / 2`.
pub fn symmetrize(m: &mut Array2<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
}

/// Max-norm of `a - b`; `f64::INFINITY` on shape mismatch.
pub fn max_abs_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    if a.dim() != b.dim() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn max_abs(a: ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}
