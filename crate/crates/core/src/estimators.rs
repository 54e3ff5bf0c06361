//! Estimators of the probed block `A_S` from correlation matrices, and the
//! exact error decompositions that explain their bias.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combination::{CombinationMatrix, MatrixJson};
use crate::correlation::{restrict, restrict_rect, CorrelationKind, CorrelationPair};
use crate::error::{Error, Result};
use crate::graph::ObservationSet;
use crate::linalg::Cholesky;
use crate::lp::{l1_chebyshev, FitError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// `[R_1]_S ([R_0]_S)^{-1}`
    Granger,
    /// `[R_1]_S`
    OneLag,
    /// `[R_1]_S - [R_0]_S`
    Residual,
    /// Row-wise l1-constrained Chebyshev fit of the Granger equations.
    /// Only defined on empirical correlations.
    RegularizedGranger,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Granger,
        EstimatorKind::OneLag,
        EstimatorKind::Residual,
        EstimatorKind::RegularizedGranger,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Granger => "granger",
            Self::OneLag => "one_lag",
            Self::Residual => "residual",
            Self::RegularizedGranger => "regularized_granger",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s || (s == "one-lag" && *k == Self::OneLag))
            .ok_or_else(|| Error::Format(format!("unknown estimator {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EstimateSource {
    Exact,
    Sample { n_samples: usize },
}

impl From<CorrelationKind> for EstimateSource {
    fn from(k: CorrelationKind) -> Self {
        match k {
            CorrelationKind::Exact => Self::Exact,
            CorrelationKind::Empirical { n_samples, .. } => Self::Sample { n_samples },
        }
    }
}

/// An `|S| x |S|` estimate of the probed block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EstimateJson", into = "EstimateJson")]
pub struct EstimateMatrix {
    pub values: Array2<f64>,
    pub kind: EstimatorKind,
    pub source: EstimateSource,
    pub s_indices: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EstimateJson {
    #[serde(flatten)]
    matrix: MatrixJson,
    kind: EstimatorKind,
    source: EstimateSource,
    s_indices: Vec<usize>,
}

impl TryFrom<EstimateJson> for EstimateMatrix {
    type Error = Error;

    fn try_from(raw: EstimateJson) -> Result<Self> {
        let values = raw.matrix.to_array(raw.matrix.n)?;
        if raw.s_indices.len() != raw.matrix.n {
            return Err(Error::Format("s_indices length disagrees with n".into()));
        }
        Ok(Self {
            values,
            kind: raw.kind,
            source: raw.source,
            s_indices: raw.s_indices,
        })
    }
}

impl From<EstimateMatrix> for EstimateJson {
    fn from(e: EstimateMatrix) -> Self {
        EstimateJson {
            matrix: MatrixJson::from_array(e.values.view()),
            kind: e.kind,
            source: e.source,
            s_indices: e.s_indices,
        }
    }
}

impl EstimateMatrix {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }
}

/// `X` with `X r0 = r1`, i.e. `r1 r0^{-1}`, through a Cholesky solve.
fn right_divide(r1: ArrayView2<f64>, r0: ArrayView2<f64>, singular: Error) -> Result<Array2<f64>> {
    let chol = Cholesky::factor_nonsingular(r0).map_err(|_| singular)?;
    // r0 symmetric: X r0 = r1  <=>  r0 X^T = r1^T
    let xt = chol.solve(r1.t());
    Ok(xt.reversed_axes().as_standard_layout().into_owned())
}

/// Applies one of the closed-form estimators to a pair restricted to `s`.
pub fn estimate(kind: EstimatorKind, pair: &CorrelationPair, s: &ObservationSet) -> Result<EstimateMatrix> {
    let sub = if pair.indices.as_slice() == s.indices() {
        pair.clone()
    } else {
        pair.restrict(s)?
    };
    sample_estimator(kind, &sub)
}

/// Applies an estimator to a pair whose labels are the probed set itself.
/// Exact pairs yield the limiting estimators; empirical pairs the sample ones.
pub fn sample_estimator(kind: EstimatorKind, pair: &CorrelationPair) -> Result<EstimateMatrix> {
    let source = EstimateSource::from(pair.kind);
    let values = match kind {
        EstimatorKind::Granger => {
            let singular = match pair.kind {
                CorrelationKind::Exact => Error::SingularSubmatrix,
                CorrelationKind::Empirical { .. } => Error::SingularEmpiricalCorrelation,
            };
            right_divide(pair.r1.view(), pair.r0.view(), singular)?
        }
        EstimatorKind::OneLag => pair.r1.clone(),
        EstimatorKind::Residual => &pair.r1 - &pair.r0,
        EstimatorKind::RegularizedGranger => return regularized_granger(pair),
    };
    Ok(EstimateMatrix {
        values,
        kind,
        source,
        s_indices: pair.indices.clone(),
    })
}

fn exact_subpair(r0: ArrayView2<f64>, r1: ArrayView2<f64>, s: &ObservationSet) -> Result<CorrelationPair> {
    Ok(CorrelationPair {
        r0: restrict(r0, s)?,
        r1: restrict(r1, s)?,
        kind: CorrelationKind::Exact,
        indices: s.indices().to_vec(),
    })
}

/// `[R_1]_S ([R_0]_S)^{-1}` from exact full-network correlations.
pub fn limiting_granger(r0: ArrayView2<f64>, r1: ArrayView2<f64>, s: &ObservationSet) -> Result<EstimateMatrix> {
    sample_estimator(EstimatorKind::Granger, &exact_subpair(r0, r1, s)?)
}

/// `[R_1]_S`.
pub fn limiting_one_lag(r1: ArrayView2<f64>, s: &ObservationSet) -> Result<EstimateMatrix> {
    Ok(EstimateMatrix {
        values: restrict(r1, s)?,
        kind: EstimatorKind::OneLag,
        source: EstimateSource::Exact,
        s_indices: s.indices().to_vec(),
    })
}

/// `[R_1]_S - [R_0]_S`.
pub fn limiting_residual(r0: ArrayView2<f64>, r1: ArrayView2<f64>, s: &ObservationSet) -> Result<EstimateMatrix> {
    sample_estimator(EstimatorKind::Residual, &exact_subpair(r0, r1, s)?)
}

/// Row `i` minimizes `|| x [R0]_S - [R1]_i ||_inf` over `||x||_1 <= 1`.
pub fn regularized_granger(pair: &CorrelationPair) -> Result<EstimateMatrix> {
    if let CorrelationKind::Empirical { n_samples, .. } = pair.kind {
        if n_samples < 2 {
            return Err(Error::InsufficientSamples(n_samples));
        }
    }
    let dim = pair.dim();
    let max_pivots = 10 * dim;
    let rows: Vec<Result<Vec<f64>>> = (0..dim)
        .into_par_iter()
        .map(|i| {
            let fit = l1_chebyshev(pair.r0.view(), pair.r1.row(i), max_pivots, 1e-12).map_err(
                |e| match e {
                    FitError::IterationLimit | FitError::Unbounded => Error::SolverFailure {
                        row: i,
                        iterations: max_pivots,
                    },
                },
            )?;
            if fit.degenerate_pivots > 0 {
                log::debug!(
                    "regularized Granger row {i}: {} degenerate pivots; first optimal vertex kept",
                    fit.degenerate_pivots
                );
            }
            Ok(fit.x.to_vec())
        })
        .collect();
    let mut values = Array2::<f64>::zeros((dim, dim));
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        values.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
    }
    Ok(EstimateMatrix {
        values,
        kind: EstimatorKind::RegularizedGranger,
        source: EstimateSource::from(pair.kind),
        s_indices: pair.indices.clone(),
    })
}

/// `[R_1]_S([R_0]_S)^{-1} = A_S + A_{SS'} H [A^2]_{S'S}` with
/// `H = (I - C)^{-1}` and `C = [A^2]_{S'}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrangerErrorDecomposition {
    pub a_s: Array2<f64>,
    pub error: Array2<f64>,
    pub h: Array2<f64>,
    pub c: Array2<f64>,
    pub latent: Vec<usize>,
}

impl GrangerErrorDecomposition {
    pub fn reconstruct(&self) -> Array2<f64> {
        &self.a_s + &self.error
    }
}

pub fn granger_error_decomposition(a: &CombinationMatrix, s: &ObservationSet) -> Result<GrangerErrorDecomposition> {
    let obs = s.indices();
    let latent = s.complement();
    let a_s = restrict_rect(a.view(), obs, obs)?;
    if latent.is_empty() {
        let k = obs.len();
        return Ok(GrangerErrorDecomposition {
            a_s,
            error: Array2::<f64>::zeros((k, k)),
            h: Array2::<f64>::zeros((0, 0)),
            c: Array2::<f64>::zeros((0, 0)),
            latent,
        });
    }
    let a2 = a.a.dot(&a.a);
    let c = restrict_rect(a2.view(), &latent, &latent)?;
    let mut i_minus_c = -&c;
    for d in i_minus_c.diag_mut() {
        *d += 1.0;
    }
    let chol = Cholesky::factor(i_minus_c.view()).map_err(|_| Error::SingularSystem)?;
    let a2_ls = restrict_rect(a2.view(), &latent, obs)?;
    let a_sl = restrict_rect(a.view(), obs, &latent)?;
    let error = a_sl.dot(&chol.solve(a2_ls.view()));
    Ok(GrangerErrorDecomposition {
        a_s,
        error,
        h: chol.inverse(),
        c,
        latent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    OneLag,
    Residual,
}

/// Partial sum of an error series and a bound on the discarded tail.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesError {
    pub partial: Array2<f64>,
    /// Max-norm bound `rho^{2k+1} / (1 - rho)` on the omitted terms.
    pub tail_bound: f64,
    pub k_max: usize,
}

/// Smallest order whose tail bound is below `1e-10`.
pub fn default_truncation_order(rho: f64) -> usize {
    if rho <= 0.0 {
        return 1;
    }
    let k = ((1e-10 * (1.0 - rho)).ln() / (2.0 * rho.ln())).ceil();
    (k.max(1.0)) as usize
}

/// One-lag: `sum_{h=1..k} [A^{2h+1}]_S`.
/// Residual: `-I_S + sum_{h=1..k} ([A^{2h+1}]_S - [A^{2h}]_S)`.
pub fn series_error(kind: SeriesKind, a: &CombinationMatrix, s: &ObservationSet, k_max: usize) -> Result<SeriesError> {
    if k_max == 0 {
        return Err(Error::ParameterDomain("k_max must be at least 1".into()));
    }
    let obs = s.indices();
    let k = obs.len();
    // rows S of A^m, advanced one power at a time
    let mut power = restrict_rect(a.view(), obs, &(0..a.n()).collect::<Vec<_>>())?;
    let mut partial = Array2::<f64>::zeros((k, k));
    if kind == SeriesKind::Residual {
        for d in partial.diag_mut() {
            *d -= 1.0;
        }
    }
    for _ in 1..=k_max {
        power = power.dot(&a.a); // A^{2h}
        if kind == SeriesKind::Residual {
            partial -= &power.select(Axis(1), obs);
        }
        power = power.dot(&a.a); // A^{2h+1}
        partial += &power.select(Axis(1), obs);
    }
    let rho = a.inf_norm();
    let tail_bound = if rho == 0.0 {
        0.0
    } else {
        rho.powi(2 * k_max as i32 + 1) / (1.0 - rho)
    };
    Ok(SeriesError {
        partial,
        tail_bound,
        k_max,
    })
}
