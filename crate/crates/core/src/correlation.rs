//! Steady-state correlation matrices `R_0`, `R_1` (exact and empirical) and
//! principal-submatrix extraction.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::combination::CombinationMatrix;
use crate::diffusion::SampleBlock;
use crate::error::{Error, Result};
use crate::graph::ObservationSet;
use crate::linalg::symmetrize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrelationKind {
    Exact,
    /// `R_0` is normalized by `n` and `R_1` by `n - 1` (the number of lag pairs).
    Empirical { n_samples: usize, demeaned: bool },
}

/// A pair `(R_0, R_1)` over the nodes listed in `indices`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationPair {
    pub r0: Array2<f64>,
    pub r1: Array2<f64>,
    pub kind: CorrelationKind,
    /// Original node label of each row/column.
    pub indices: Vec<usize>,
}

impl CorrelationPair {
    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    /// Restricts to `s`, which must be a subset of the pair's labels.
    pub fn restrict(&self, s: &ObservationSet) -> Result<CorrelationPair> {
        let pos = local_positions(&self.indices, s.indices())?;
        Ok(CorrelationPair {
            r0: select(self.r0.view(), &pos, &pos),
            r1: select(self.r1.view(), &pos, &pos),
            kind: self.kind,
            indices: s.indices().to_vec(),
        })
    }
}

fn local_positions(labels: &[usize], wanted: &[usize]) -> Result<Vec<usize>> {
    wanted
        .iter()
        .map(|&w| {
            labels
                .binary_search(&w)
                .map_err(|_| Error::IndexOutOfRange { index: w, n: labels.len() })
        })
        .collect()
}

fn select(m: ArrayView2<f64>, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), cols.len()), |(a, b)| m[[rows[a], cols[b]]])
}

/// `[M]_{ST}`: rows indexed by `rows`, columns by `cols`, in the given order.
pub fn restrict_rect(m: ArrayView2<f64>, rows: &[usize], cols: &[usize]) -> Result<Array2<f64>> {
    for &i in rows {
        if i >= m.nrows() {
            return Err(Error::IndexOutOfRange { index: i, n: m.nrows() });
        }
    }
    for &j in cols {
        if j >= m.ncols() {
            return Err(Error::IndexOutOfRange { index: j, n: m.ncols() });
        }
    }
    Ok(select(m, rows, cols))
}

/// Principal submatrix `[M]_S`.
pub fn restrict(m: ArrayView2<f64>, s: &ObservationSet) -> Result<Array2<f64>> {
    restrict_rect(m, s.indices(), s.indices())
}

/// `R_0 = sigma^2 (I - A^2)^{-1}`.
pub fn exact_r0(a: &CombinationMatrix, sigma: f64) -> Result<Array2<f64>> {
    let mut r0 = a.stability_factor().map_err(|_| Error::SingularSystem)?.inverse();
    let s2 = sigma * sigma;
    r0.mapv_inplace(|v| s2 * v);
    Ok(r0)
}

/// `R_1 = A R_0`.
pub fn exact_r1(a: &CombinationMatrix, sigma: f64) -> Result<Array2<f64>> {
    let r0 = exact_r0(a, sigma)?;
    Ok(r1_from_r0(a, &r0))
}

fn r1_from_r0(a: &CombinationMatrix, r0: &Array2<f64>) -> Array2<f64> {
    let mut r1 = a.a.dot(r0);
    symmetrize(&mut r1);
    r1
}

/// Both exact correlations over all `N` nodes, sharing one factorization.
pub fn exact_pair(a: &CombinationMatrix, sigma: f64) -> Result<CorrelationPair> {
    let r0 = exact_r0(a, sigma)?;
    let r1 = r1_from_r0(a, &r0);
    Ok(CorrelationPair {
        r0,
        r1,
        kind: CorrelationKind::Exact,
        indices: (0..a.n()).collect(),
    })
}

/// `[R_0]_S` and `[R_1]_S` without forming the full inverse: solves
/// `(I - A^2) X = E_S` for the `|S|` needed columns only.
pub fn exact_pair_on(a: &CombinationMatrix, sigma: f64, s: &ObservationSet) -> Result<CorrelationPair> {
    if s.n() != a.n() {
        return Err(Error::ShapeMismatch {
            expected: (a.n(), a.n()),
            found: (s.n(), s.n()),
        });
    }
    let chol = a.stability_factor().map_err(|_| Error::SingularSystem)?;
    let idx = s.indices();
    let mut x = Array2::<f64>::zeros((a.n(), idx.len()));
    for (c, &i) in idx.iter().enumerate() {
        x[[i, c]] = 1.0;
    }
    chol.solve_in_place(x.view_mut());
    let s2 = sigma * sigma;
    x.mapv_inplace(|v| s2 * v);
    let mut r0 = x.select(ndarray::Axis(0), idx);
    symmetrize(&mut r0);
    let mut r1 = a.a.select(ndarray::Axis(0), idx).dot(&x);
    symmetrize(&mut r1);
    Ok(CorrelationPair {
        r0,
        r1,
        kind: CorrelationKind::Exact,
        indices: idx.to_vec(),
    })
}

const CHUNK: usize = 256;

/// Streaming accumulator of `sum y_i y_i^T` and `sum y_i y_{i-1}^T`.
///
/// Samples are buffered column-wise and folded in with matrix products, so
/// accumulation costs the same as one pass of GEMM over the data.
#[derive(Debug, Clone)]
pub struct CorrelationAccumulator {
    dim: usize,
    demean: bool,
    /// Column 0 carries the previous sample once one exists.
    buf: Array2<f64>,
    filled: usize,
    has_prev: bool,
    count: usize,
    s0: Array2<f64>,
    s1: Array2<f64>,
    sum: Array1<f64>,
    first: Array1<f64>,
}

impl CorrelationAccumulator {
    pub fn new(dim: usize, demean: bool) -> Self {
        Self {
            dim,
            demean,
            buf: Array2::<f64>::zeros((dim, CHUNK + 1)),
            filled: 0,
            has_prev: false,
            count: 0,
            s0: Array2::<f64>::zeros((dim, dim)),
            s1: Array2::<f64>::zeros((dim, dim)),
            sum: Array1::zeros(dim),
            first: Array1::zeros(dim),
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, y: &[f64]) {
        debug_assert_eq!(y.len(), self.dim);
        let col = 1 + self.filled;
        for (l, &v) in y.iter().enumerate() {
            self.buf[[l, col]] = v;
            self.sum[l] += v;
        }
        if self.count == 0 {
            self.first.assign(&Array1::from(y.to_vec()));
        }
        self.count += 1;
        self.filled += 1;
        if self.filled == CHUNK {
            self.flush();
        }
    }

    /// Pushes the selected entries of a full state vector.
    pub fn push_selected(&mut self, y: &[f64], idx: &[usize]) {
        let sel: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        self.push(&sel);
    }

    fn flush(&mut self) {
        let m = self.filled;
        if m == 0 {
            return;
        }
        let cur = self.buf.slice(s![.., 1..=m]);
        general_mat_mul(1.0, &cur, &cur.t(), 1.0, &mut self.s0);
        let skip = usize::from(!self.has_prev);
        if m > skip {
            let cur = self.buf.slice(s![.., 1 + skip..=m]);
            let prev = self.buf.slice(s![.., skip..m]);
            general_mat_mul(1.0, &cur, &prev.t(), 1.0, &mut self.s1);
        }
        let last = self.buf.column(m).to_owned();
        self.buf.column_mut(0).assign(&last);
        self.has_prev = true;
        self.filled = 0;
    }

    /// The last pushed sample (`y_n`), if any.
    fn last(&self) -> Array1<f64> {
        if self.filled > 0 {
            self.buf.column(self.filled).to_owned()
        } else {
            self.buf.column(0).to_owned()
        }
    }

    pub fn finish(mut self, indices: Vec<usize>) -> Result<CorrelationPair> {
        if self.count < 2 {
            return Err(Error::InsufficientSamples(self.count));
        }
        if indices.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: (self.dim, self.dim),
                found: (indices.len(), indices.len()),
            });
        }
        let last = self.last();
        self.flush();
        let n = self.count as f64;
        let mut r0 = self.s0;
        let mut r1 = self.s1;
        if self.demean {
            let mean = &self.sum / n;
            // sum_{i>=2} y_i and sum_{i>=2} y_{i-1}
            let tail = &self.sum - &self.first;
            let head = &self.sum - &last;
            let d = self.dim;
            for i in 0..d {
                for j in 0..d {
                    r0[[i, j]] -= n * mean[i] * mean[j];
                    r1[[i, j]] += -tail[i] * mean[j] - mean[i] * head[j] + (n - 1.0) * mean[i] * mean[j];
                }
            }
        }
        r0.mapv_inplace(|v| v / n);
        r1.mapv_inplace(|v| v / (n - 1.0));
        symmetrize(&mut r0);
        Ok(CorrelationPair {
            r0,
            r1,
            kind: CorrelationKind::Empirical {
                n_samples: self.count,
                demeaned: self.demean,
            },
            indices,
        })
    }
}

/// Sample correlations of a block: `R0 = (1/n) sum y_i y_i^T`,
/// `R1 = (1/(n-1)) sum_{i>=2} y_i y_{i-1}^T`.
pub fn empirical_correlations(y: &SampleBlock) -> Result<CorrelationPair> {
    empirical_correlations_with(y, false)
}

pub fn empirical_correlations_with(y: &SampleBlock, demean: bool) -> Result<CorrelationPair> {
    let n = y.n_samples();
    if n < 2 {
        return Err(Error::InsufficientSamples(n));
    }
    let mut acc = CorrelationAccumulator::new(y.data.nrows(), demean);
    let mut col = vec![0.0; y.data.nrows()];
    for t in 0..n {
        for (l, v) in col.iter_mut().enumerate() {
            *v = y.data[[l, t]];
        }
        acc.push(&col);
    }
    acc.finish(y.s.indices().to_vec())
}
