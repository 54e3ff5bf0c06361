//! Dense primal simplex for `max c^T x  s.t.  A x <= b, x >= 0` with `b >= 0`,
//! and the l1-constrained Chebyshev regression built on it.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

const PIVOT_TOL: f64 = 1e-12;
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal {
        x: Array1<f64>,
        value: f64,
        pivots: usize,
        degenerate_pivots: usize,
    },
    Unbounded,
    IterationLimit,
}

/// Solves the LP from the all-slack basis. Uses Dantzig's rule and falls back
/// to Bland's rule after a streak of degenerate pivots.
pub fn simplex_max(
    a: ArrayView2<f64>,
    b: ArrayView1<f64>,
    c: ArrayView1<f64>,
    max_pivots: usize,
    opt_tol: f64,
) -> LpOutcome {
    let (m, n) = a.dim();
    assert!(b.iter().all(|&v| v >= 0.0), "initial basis must be feasible");
    let width = n + m + 1;
    // rows 0..m constraints, row m objective (reduced costs, negated c)
    let mut t = vec![0.0; (m + 1) * width];
    for i in 0..m {
        let row = &mut t[i * width..(i + 1) * width];
        for j in 0..n {
            row[j] = a[[i, j]];
        }
        row[n + i] = 1.0;
        row[width - 1] = b[i];
    }
    for j in 0..n {
        t[m * width + j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut pivots = 0;
    let mut degenerate = 0;
    let mut streak = 0;
    loop {
        let obj = &t[m * width..(m + 1) * width];
        let entering = if streak >= DEGENERATE_STREAK {
            (0..n + m).find(|&j| obj[j] < -opt_tol)
        } else {
            let mut best = None;
            let mut best_val = -opt_tol;
            for (j, &v) in obj[..n + m].iter().enumerate() {
                if v < best_val {
                    best_val = v;
                    best = Some(j);
                }
            }
            best
        };
        let Some(q) = entering else {
            let mut x = Array1::zeros(n);
            for (i, &bv) in basis.iter().enumerate() {
                if bv < n {
                    x[bv] = t[i * width + width - 1];
                }
            }
            let value = t[m * width + width - 1];
            return LpOutcome::Optimal {
                x,
                value,
                pivots,
                degenerate_pivots: degenerate,
            };
        };
        if pivots >= max_pivots {
            return LpOutcome::IterationLimit;
        }
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let aij = t[i * width + q];
            if aij > PIVOT_TOL {
                let ratio = t[i * width + width - 1].max(0.0) / aij;
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-15 || (ratio <= lr + 1e-15 && basis[i] < basis[li]) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((p, ratio)) = leave else {
            return LpOutcome::Unbounded;
        };
        if ratio <= 1e-15 {
            degenerate += 1;
            streak += 1;
        } else {
            streak = 0;
        }
        pivot(&mut t, width, m + 1, p, q);
        basis[p] = q;
        pivots += 1;
    }
}

fn pivot(t: &mut [f64], width: usize, rows: usize, p: usize, q: usize) {
    let inv = 1.0 / t[p * width + q];
    for v in &mut t[p * width..(p + 1) * width] {
        *v *= inv;
    }
    t[p * width + q] = 1.0;
    let prow: Vec<f64> = t[p * width..(p + 1) * width].to_vec();
    for i in 0..rows {
        if i == p {
            continue;
        }
        let row = &mut t[i * width..(i + 1) * width];
        let f = row[q];
        if f != 0.0 {
            for (v, &pv) in row.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            row[q] = 0.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevFit {
    pub x: Array1<f64>,
    /// `|| x M - r ||_inf`, recomputed from `x`.
    pub residual: f64,
    pub pivots: usize,
    pub degenerate_pivots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitError {
    IterationLimit,
    Unbounded,
}

/// `min_x || x M - r ||_inf  s.t.  ||x||_1 <= 1`, with `x` a row vector.
///
/// Written as `max w` over `x = u - v`, `u, v >= 0`, `w = ||r||_inf - t`
/// so that the origin is a feasible vertex:
///
/// ```text
///  (u - v) M_k + w <= r_k + T
/// -(u - v) M_k + w <= T - r_k
///  sum(u + v)      <= 1
/// ```
pub fn l1_chebyshev(
    m: ArrayView2<f64>,
    r: ArrayView1<f64>,
    max_pivots: usize,
    opt_tol: f64,
) -> Result<ChebyshevFit, FitError> {
    let s = m.nrows();
    assert_eq!(m.ncols(), r.len());
    let k = r.len();
    let big_t = r.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let nv = 2 * s + 1;
    let nc = 2 * k + 1;
    let mut a = Array2::<f64>::zeros((nc, nv));
    let mut b = Array1::<f64>::zeros(nc);
    for col in 0..k {
        for l in 0..s {
            let v = m[[l, col]];
            a[[col, l]] = v;
            a[[col, s + l]] = -v;
            a[[k + col, l]] = -v;
            a[[k + col, s + l]] = v;
        }
        a[[col, 2 * s]] = 1.0;
        a[[k + col, 2 * s]] = 1.0;
        b[col] = r[col] + big_t;
        b[k + col] = big_t - r[col];
    }
    for l in 0..2 * s {
        a[[2 * k, l]] = 1.0;
    }
    b[2 * k] = 1.0;
    let mut c = Array1::<f64>::zeros(nv);
    c[2 * s] = 1.0;
    match simplex_max(a.view(), b.view(), c.view(), max_pivots, opt_tol) {
        LpOutcome::Optimal {
            x,
            pivots,
            degenerate_pivots,
            ..
        } => {
            let coef: Array1<f64> = (0..s).map(|l| x[l] - x[s + l]).collect();
            let residual = (&coef.dot(&m) - &r)
                .iter()
                .fold(0.0_f64, |acc, v| acc.max(v.abs()));
            Ok(ChebyshevFit {
                x: coef,
                residual,
                pivots,
                degenerate_pivots,
            })
        }
        LpOutcome::Unbounded => Err(FitError::Unbounded),
        LpOutcome::IterationLimit => Err(FitError::IterationLimit),
    }
}
