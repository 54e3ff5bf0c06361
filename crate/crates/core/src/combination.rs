//! Combination matrices built from graphs, and the regular-diffusion checks.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{degrees, DegreeProfile, Graph};
use crate::linalg::Cholesky;

const ROW_SUM_TOL: f64 = 1e-12;
const SELF_WEIGHT_TOL: f64 = 1e-12;

/// Symmetric nonnegative matrix with every row summing to `rho` and
/// off-diagonal entries sandwiched as `kappa/d_max <= a_ij <= kappa/d_min`
/// on edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct CombinationMatrix {
    pub a: Array2<f64>,
    pub rho: f64,
    pub kappa: f64,
}

impl CombinationMatrix {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.a.view()
    }

    /// Cholesky factor of `I - A^2`; fails when `A` is not stable.
    pub fn stability_factor(&self) -> Result<Cholesky> {
        let n = self.n();
        let mut m = self.a.dot(&self.a);
        m.mapv_inplace(|v| -v);
        for i in 0..n {
            m[[i, i]] += 1.0;
        }
        Cholesky::factor(m.view())
    }

    /// Max absolute row sum, an upper bound on the spectral radius.
    pub fn inf_norm(&self) -> f64 {
        self.a
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Row-major JSON layout shared by every dense matrix this crate writes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_array(m: ArrayView2<f64>) -> Self {
        Self {
            n: m.nrows(),
            rho: None,
            kappa: None,
            rows: m.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }

    /// Rebuilds the dense matrix; rows must all have `ncols` entries.
    pub fn to_array(&self, ncols: usize) -> Result<Array2<f64>> {
        if self.rows.len() != self.n {
            return Err(Error::Format(format!(
                "\"n\" is {} but {} rows were given",
                self.n,
                self.rows.len()
            )));
        }
        let mut flat = Vec::with_capacity(self.n * ncols);
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::Format(format!(
                    "row {i} has {} entries, expected {ncols}",
                    r.len()
                )));
            }
            flat.extend_from_slice(r);
        }
        Array2::from_shape_vec((self.n, ncols), flat).map_err(|e| Error::Format(e.to_string()))
    }
}

impl TryFrom<MatrixJson> for CombinationMatrix {
    type Error = Error;

    fn try_from(raw: MatrixJson) -> Result<Self> {
        let a = raw.to_array(raw.n)?;
        let rho = raw
            .rho
            .ok_or_else(|| Error::Format("combination matrix is missing \"rho\"".into()))?;
        let kappa = raw
            .kappa
            .ok_or_else(|| Error::Format("combination matrix is missing \"kappa\"".into()))?;
        Ok(Self { a, rho, kappa })
    }
}

impl From<CombinationMatrix> for MatrixJson {
    fn from(m: CombinationMatrix) -> Self {
        let mut out = MatrixJson::from_array(m.a.view());
        out.rho = Some(m.rho);
        out.kappa = Some(m.kappa);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CombinationPolicy {
    /// `a_ij = rho * lambda * g_ij / d_max`.
    Laplacian { rho: f64, lambda: f64 },
    /// `a_ij = rho * g_ij / max(d_i, d_j)`.
    Metropolis { rho: f64 },
}

impl CombinationPolicy {
    pub fn rho(&self) -> f64 {
        match *self {
            Self::Laplacian { rho, .. } | Self::Metropolis { rho } => rho,
        }
    }

    /// The sandwich constant the rule realizes.
    pub fn kappa(&self) -> f64 {
        match *self {
            Self::Laplacian { rho, lambda } => rho * lambda,
            Self::Metropolis { rho } => rho,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rho = self.rho();
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::ParameterDomain(format!("rho must lie in (0, 1), got {rho}")));
        }
        if let Self::Laplacian { lambda, .. } = *self {
            if !(lambda > 0.0 && lambda <= 1.0) {
                return Err(Error::ParameterDomain(format!(
                    "lambda must lie in (0, 1], got {lambda}"
                )));
            }
        }
        Ok(())
    }
}

pub fn apply_policy(g: &Graph, policy: CombinationPolicy) -> Result<CombinationMatrix> {
    policy.validate()?;
    let prof = degrees(g);
    let rho = policy.rho();
    match policy {
        CombinationPolicy::Laplacian { lambda, .. } => {
            let w = rho * lambda / prof.d_max as f64;
            apply_custom_policy(g, rho, policy.kappa(), |_, _, _| w)
        }
        CombinationPolicy::Metropolis { .. } => apply_custom_policy(g, rho, rho, |i, j, p| {
            rho / p.degrees[i].max(p.degrees[j]) as f64
        }),
    }
}

/// Builds a combination matrix from an arbitrary edge weight rule. The rule
/// is only evaluated on edges; self-weights close every row at `rho`.
pub fn apply_custom_policy(
    g: &Graph,
    rho: f64,
    kappa: f64,
    weight: impl Fn(usize, usize, &DegreeProfile) -> f64,
) -> Result<CombinationMatrix> {
    let n = g.n();
    let prof = degrees(g);
    let mut a = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in g.neighbors(i) {
            a[[i, j]] = weight(i, j, &prof);
        }
    }
    for i in 0..n {
        let off: f64 = a.row(i).sum();
        a[[i, i]] = rho - off;
        // one correction pass absorbs the rounding of the first subtraction
        let total: f64 = a.row(i).sum();
        a[[i, i]] += rho - total;
        if a[[i, i]] < -SELF_WEIGHT_TOL {
            return Err(Error::NegativeSelfWeight {
                node: i,
                value: a[[i, i]],
            });
        }
    }
    Ok(CombinationMatrix { a, rho, kappa })
}

/// Combine-then-adapt mapping: `a_ij = (1 - mu) w_ij` for a right-stochastic `w`.
pub fn cta_weights(w: ArrayView2<f64>, mu: f64) -> Result<Array2<f64>> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::ParameterDomain(format!("mu must lie in (0, 1), got {mu}")));
    }
    if w.nrows() != w.ncols() {
        return Err(Error::ShapeMismatch {
            expected: (w.nrows(), w.nrows()),
            found: w.dim(),
        });
    }
    for (i, row) in w.rows().into_iter().enumerate() {
        let sum: f64 = row.sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|&v| v < 0.0) {
            return Err(Error::NotStochastic { row: i, sum });
        }
    }
    Ok(w.mapv(|v| (1.0 - mu) * v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Shape,
    Symmetry,
    RowSum,
    Support,
    SandwichLower,
    SandwichUpper,
    NegativeDiagonal,
}

/// Worst offender of one invariant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub i: usize,
    pub j: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn get(&self, kind: ViolationKind) -> Option<&Violation> {
        self.violations.iter().find(|v| v.kind == kind)
    }

    fn record(&mut self, kind: ViolationKind, i: usize, j: usize, magnitude: f64) {
        match self.violations.iter_mut().find(|v| v.kind == kind) {
            Some(v) if v.magnitude >= magnitude => {}
            Some(v) => *v = Violation { kind, i, j, magnitude },
            None => self.violations.push(Violation { kind, i, j, magnitude }),
        }
    }
}

/// Checks the regular-diffusion conditions and reports the worst violation of
/// each one.
pub fn validate_regular(a: ArrayView2<f64>, g: &Graph, rho: f64, kappa: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = g.n();
    if a.dim() != (n, n) {
        report.record(ViolationKind::Shape, a.nrows(), a.ncols(), f64::INFINITY);
        return report;
    }
    let prof = degrees(g);
    let lo = kappa / prof.d_max as f64;
    let hi = kappa / prof.d_min as f64;
    let rel = 1e-12 * kappa.abs().max(1.0);
    for i in 0..n {
        let row = a.row(i);
        let dev = (row.sum() - rho).abs();
        if dev > ROW_SUM_TOL {
            report.record(ViolationKind::RowSum, i, i, dev);
        }
        if a[[i, i]] < 0.0 {
            report.record(ViolationKind::NegativeDiagonal, i, i, -a[[i, i]]);
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = a[[i, j]];
            let asym = (v - a[[j, i]]).abs();
            if asym > 0.0 {
                report.record(ViolationKind::Symmetry, i, j, asym);
            }
            if g.has_edge(i, j) {
                if !(v > 0.0) {
                    report.record(ViolationKind::Support, i, j, v.abs().max(f64::MIN_POSITIVE));
                }
                if v < lo - rel {
                    report.record(ViolationKind::SandwichLower, i, j, lo - v);
                }
                if v > hi + rel {
                    report.record(ViolationKind::SandwichUpper, i, j, v - hi);
                }
            } else if v != 0.0 {
                report.record(ViolationKind::Support, i, j, v.abs());
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_er;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-14
    }

    #[test]
    fn empty_graph_metropolis_is_scaled_identity() {
        let m = apply_policy(&Graph::empty(4), CombinationPolicy::Metropolis { rho: 0.99 }).unwrap();
        assert_eq!(m.a, Array2::<f64>::eye(4) * 0.99);
    }

    #[test]
    fn triangle_metropolis() {
        let m = apply_policy(&Graph::complete(3), CombinationPolicy::Metropolis { rho: 0.99 }).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(close(m.a[[i, j]], 0.33), "{:?}", m.a);
            }
        }
    }

    #[test]
    fn star_laplacian() {
        let g = Graph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let m = apply_policy(&g, CombinationPolicy::Laplacian { rho: 0.9, lambda: 1.0 }).unwrap();
        assert!(close(m.a[[0, 1]], 0.18));
        assert!(close(m.a[[0, 0]], 0.18));
        assert!(close(m.a[[3, 3]], 0.72));
        assert_eq!(m.a[[1, 2]], 0.0);
        assert_eq!(m.kappa, 0.9);
    }

    #[test]
    fn custom_policy_negative_self_weight() {
        let g = Graph::complete(3);
        let err = apply_custom_policy(&g, 0.5, 0.5, |_, _, _| 0.4).unwrap_err();
        assert!(matches!(err, Error::NegativeSelfWeight { .. }));
    }

    #[test]
    fn cta_examples() {
        let w = Array2::<f64>::eye(3);
        assert_eq!(cta_weights(w.view(), 0.01).unwrap(), Array2::<f64>::eye(3) * 0.99);
        let w = Array2::from_elem((2, 2), 0.5);
        let a = cta_weights(w.view(), 0.1).unwrap();
        assert!(a.iter().all(|&v| close(v, 0.45)));
        let bad = ndarray::array![[0.5, 0.4], [0.5, 0.5]];
        assert!(matches!(cta_weights(bad.view(), 0.1), Err(Error::NotStochastic { row: 0, .. })));
    }

    #[test]
    fn validation_flags_row_sum_and_support() {
        let g = generate_er(8, 0.5, 2).unwrap();
        let m = apply_policy(&g, CombinationPolicy::Metropolis { rho: 0.99 }).unwrap();
        assert!(validate_regular(m.view(), &g, m.rho, m.kappa).is_valid());

        let mut bad = m.a.clone();
        bad[[3, 3]] -= 0.01;
        let rep = validate_regular(bad.view(), &g, 0.99, 0.99);
        let v = rep.get(ViolationKind::RowSum).unwrap();
        assert_eq!(v.i, 3);
        assert!((v.magnitude - 0.01).abs() < 1e-12);

        let (i, j) = (0..8)
            .flat_map(|i| (0..8).map(move |j| (i, j)))
            .find(|&(i, j)| i != j && !g.has_edge(i, j))
            .unwrap();
        let mut bad = m.a.clone();
        bad[[i, j]] = 0.01;
        let rep = validate_regular(bad.view(), &g, 0.99, 0.99);
        let v = rep.get(ViolationKind::Support).unwrap();
        assert_eq!((v.i, v.j), (i, j));
    }

    #[test]
    fn laplacian_offdiagonals_are_uniform() {
        let g = generate_er(30, 0.3, 9).unwrap();
        let pol = CombinationPolicy::Laplacian { rho: 0.99, lambda: 0.9 };
        let m = apply_policy(&g, pol).unwrap();
        let w = 0.99 * 0.9 / degrees(&g).d_max as f64;
        for (i, j) in g.edges() {
            assert_eq!(m.a[[i, j]], w);
        }
        assert!((m.kappa - 0.891).abs() < 1e-15);
        assert!((m.inf_norm() - 0.99).abs() < 1e-12);
    }

    #[test]
    fn json_layout() {
        let m = apply_policy(&Graph::complete(2), CombinationPolicy::Metropolis { rho: 0.5 }).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["n"], 2);
        assert_eq!(v["rho"], 0.5);
        assert_eq!(v["rows"][0][1], 0.25);
        let back: CombinationMatrix = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
