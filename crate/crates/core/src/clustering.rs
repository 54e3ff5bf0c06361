//! Two-class clustering of estimated entries, recovered subgraphs, and the
//! margins that quantify how well the classes separate.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::combination::CombinationMatrix;
use crate::correlation::restrict_rect;
use crate::error::{Error, Result};
use crate::estimators::EstimateMatrix;
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Size of the lower class `C_0` after sorting; `None` for a single cluster.
    pub split_index: Option<usize>,
    pub c0: f64,
    /// Equals `c0` for a single cluster.
    pub c1: f64,
    /// `true` when the value at this input position belongs to `C_1`.
    pub assignments: Vec<bool>,
}

impl ClusterResult {
    pub fn is_degenerate(&self) -> bool {
        self.split_index.is_none()
    }

    pub fn threshold(&self) -> f64 {
        0.5 * (self.c0 + self.c1)
    }
}

/// Modified k-means with two classes.
///
/// Candidate splits of the sorted values are those whose centroid midpoint
/// lies between the last value of `C_0` and the first value of `C_1` (the
/// k-means fixed-point condition); among them the split with the largest
/// centroid distance wins, smallest split first on ties.
pub fn cluster_two(values: &[f64]) -> Result<ClusterResult> {
    let l = values.len();
    if l == 0 {
        return Err(Error::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::ParameterDomain("non-finite value in clustering input".into()));
    }
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&x, &y| values[x].total_cmp(&values[y]));
    let sorted: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    let (lo, hi) = (sorted[0], sorted[l - 1]);
    let mean = sorted.iter().sum::<f64>() / l as f64;
    if hi - lo <= 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
        return Ok(ClusterResult {
            split_index: None,
            c0: mean,
            c1: mean,
            assignments: vec![false; l],
        });
    }
    let mut prefix = Vec::with_capacity(l + 1);
    prefix.push(0.0);
    for v in &sorted {
        prefix.push(prefix.last().unwrap() + v);
    }
    let total = prefix[l];
    let mut best: Option<(usize, f64, f64, f64)> = None;
    for j in 1..l {
        // equal neighbours cannot be separated
        if sorted[j - 1] == sorted[j] {
            continue;
        }
        let c0 = prefix[j] / j as f64;
        let c1 = (total - prefix[j]) / (l - j) as f64;
        let mid = 0.5 * (c0 + c1);
        let slack = 1e-12 * (1.0 + mid.abs());
        if sorted[j - 1] <= mid + slack && mid <= sorted[j] + slack {
            let dist = c1 - c0;
            if best.is_none_or(|(_, d, _, _)| dist > d) {
                best = Some((j, dist, c0, c1));
            }
        }
    }
    let Some((j, _, c0, c1)) = best else {
        return Ok(ClusterResult {
            split_index: None,
            c0: mean,
            c1: mean,
            assignments: vec![false; l],
        });
    };
    let mut assignments = vec![false; l];
    for &k in &order[j..] {
        assignments[k] = true;
    }
    Ok(ClusterResult {
        split_index: Some(j),
        c0,
        c1,
        assignments,
    })
}

/// Ordered off-diagonal entries of a square matrix, row by row.
pub fn off_diagonal(m: ArrayView2<f64>) -> Vec<f64> {
    let k = m.nrows();
    let mut out = Vec::with_capacity(k * k.saturating_sub(1));
    for i in 0..k {
        for j in 0..k {
            if i != j {
                out.push(m[[i, j]]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    /// Recovered graph on local labels `0..|S|`.
    pub graph: Graph,
    pub cluster: ClusterResult,
}

/// Clusters the `|S|(|S|-1)` ordered off-diagonal entries and joins `i`, `j`
/// when either `(i, j)` or `(j, i)` lands in the upper class.
pub fn recover(est: &EstimateMatrix) -> Result<Recovery> {
    let k = est.dim();
    if k < 2 {
        return Err(Error::DegenerateSubset { n: k, size: k });
    }
    let cluster = cluster_two(&off_diagonal(est.values.view()))?;
    let mut upper = Array2::<bool>::from_elem((k, k), false);
    let mut pos = 0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                upper[[i, j]] = cluster.assignments[pos];
                pos += 1;
            }
        }
    }
    let graph = Graph::from_fn(k, |i, j| upper[[i, j]] || upper[[j, i]]);
    Ok(Recovery { graph, cluster })
}

pub fn recover_graph(est: &EstimateMatrix) -> Result<Graph> {
    recover(est).map(|r| r.graph)
}

pub fn recovery_indicator(recovered: &Graph, truth: &Graph) -> Result<bool> {
    if recovered.n() != truth.n() {
        return Err(Error::ShapeMismatch {
            expected: (truth.n(), truth.n()),
            found: (recovered.n(), recovered.n()),
        });
    }
    Ok(recovered == truth)
}

/// Extremes of the estimated entries over disconnected (`a_ij = 0`) and
/// connected (`a_ij > 0`) ordered pairs, raw and scaled by `s_N = N p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct MarginReport {
    pub delta_low: Option<f64>,
    pub delta_high: Option<f64>,
    pub Delta_low: Option<f64>,
    pub Delta_high: Option<f64>,
    pub scale: f64,
    pub scaled_delta_low: Option<f64>,
    pub scaled_delta_high: Option<f64>,
    pub scaled_Delta_low: Option<f64>,
    pub scaled_Delta_high: Option<f64>,
    /// `s_N` times the mean over disconnected entries.
    pub empirical_bias: Option<f64>,
    /// `s_N (Delta_low - delta_high)`.
    pub empirical_gap: Option<f64>,
    pub n_disconnected: usize,
    pub n_connected: usize,
}

impl MarginReport {
    /// Both classes present.
    pub fn is_defined(&self) -> bool {
        self.n_disconnected > 0 && self.n_connected > 0
    }
}

pub fn margins(est: &EstimateMatrix, a: &CombinationMatrix, n_nodes: usize, p: f64) -> Result<MarginReport> {
    let idx = &est.s_indices;
    let a_s = restrict_rect(a.view(), idx, idx)?;
    if a_s.dim() != est.values.dim() {
        return Err(Error::ShapeMismatch {
            expected: a_s.dim(),
            found: est.values.dim(),
        });
    }
    let scale = n_nodes as f64 * p;
    let mut dis = Extremes::default();
    let mut con = Extremes::default();
    for ((i, j), &v) in est.values.indexed_iter() {
        if i == j {
            continue;
        }
        if a_s[[i, j]] == 0.0 {
            dis.push(v);
        } else {
            con.push(v);
        }
    }
    let sc = |v: Option<f64>| v.map(|x| scale * x);
    let empirical_gap = match (con.min, dis.max) {
        (Some(c), Some(d)) => Some(scale * (c - d)),
        _ => None,
    };
    Ok(MarginReport {
        delta_low: dis.min,
        delta_high: dis.max,
        Delta_low: con.min,
        Delta_high: con.max,
        scale,
        scaled_delta_low: sc(dis.min),
        scaled_delta_high: sc(dis.max),
        scaled_Delta_low: sc(con.min),
        scaled_Delta_high: sc(con.max),
        empirical_bias: (dis.count > 0).then(|| scale * dis.sum / dis.count as f64),
        empirical_gap,
        n_disconnected: dis.count,
        n_connected: con.count,
    })
}

#[derive(Default)]
struct Extremes {
    min: Option<f64>,
    max: Option<f64>,
    sum: f64,
    count: usize,
}

impl Extremes {
    fn push(&mut self, v: f64) {
        self.min = Some(self.min.map_or(v, |m| m.min(v)));
        self.max = Some(self.max.map_or(v, |m| m.max(v)));
        self.sum += v;
        self.count += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{EstimateSource, EstimatorKind};
    use ndarray::array;

    fn est(values: Array2<f64>) -> EstimateMatrix {
        let k = values.nrows();
        EstimateMatrix {
            values,
            kind: EstimatorKind::Granger,
            source: EstimateSource::Exact,
            s_indices: (0..k).collect(),
        }
    }

    #[test]
    fn perfect_separation() {
        let r = cluster_two(&[0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(r.split_index, Some(3));
        assert_eq!(r.assignments, vec![false, true, false, true, false]);
        assert_eq!((r.c0, r.c1), (0.0, 1.0));
    }

    #[test]
    fn unbalanced_classes() {
        let mut v: Vec<f64> = (0..98).map(|k| -0.01 + 0.02 * k as f64 / 97.0).collect();
        v.push(0.99);
        v.push(1.01);
        let r = cluster_two(&v).unwrap();
        assert_eq!(r.split_index, Some(98));
        assert!(r.assignments[98] && r.assignments[99]);
        assert_eq!(r.assignments.iter().filter(|&&b| b).count(), 2);
    }

    #[test]
    fn degenerate_inputs() {
        let r = cluster_two(&[0.5; 6]).unwrap();
        assert!(r.is_degenerate());
        assert!(r.assignments.iter().all(|&b| !b));
        assert!(cluster_two(&[0.5]).unwrap().is_degenerate());
        assert!(matches!(cluster_two(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn ties_form_one_candidate() {
        let r = cluster_two(&[1.0, 1.0, 3.0, 3.0]).unwrap();
        assert_eq!(r.split_index, Some(2));
    }

    #[test]
    fn triangle_plus_isolated_node() {
        let a = array![
            [0.0, 0.3, 0.3, 0.0],
            [0.3, 0.0, 0.3, 0.0],
            [0.3, 0.3, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0]
        ];
        let g = recover_graph(&est(a)).unwrap();
        assert_eq!(g.edges(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn asymmetric_entries_are_or_joined() {
        let a = array![[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let g = recover_graph(&est(a)).unwrap();
        assert_eq!(g.edges(), vec![(0, 1)]);
        let tiny = array![[0.0, 1.0, 0.0], [1.0 + 1e-13, 0.0, 0.0], [0.0, 0.0, 0.0]];
        assert_eq!(recover_graph(&est(tiny)).unwrap().edges(), vec![(0, 1)]);
    }

    #[test]
    fn single_cluster_means_no_edges() {
        let g = recover_graph(&est(Array2::from_elem((3, 3), 0.2))).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn indicator() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let h = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(recovery_indicator(&g, &g).unwrap());
        assert!(!recovery_indicator(&g, &h).unwrap());
        assert!(recovery_indicator(&Graph::empty(4), &Graph::empty(4)).unwrap());
        assert!(recovery_indicator(&g, &Graph::empty(4)).is_err());
    }

    #[test]
    fn margins_of_true_matrix() {
        let a = CombinationMatrix {
            a: array![[0.5, 0.2, 0.0], [0.2, 0.4, 0.3], [0.0, 0.3, 0.6]],
            rho: 0.9,
            kappa: 0.9,
        };
        let m = margins(&est(a.a.clone()), &a, 3, 0.5).unwrap();
        assert_eq!(m.delta_high, Some(0.0));
        assert_eq!(m.Delta_low, Some(0.2));
        assert_eq!(m.Delta_high, Some(0.3));
        assert_eq!(m.scale, 1.5);
        assert_eq!(m.scaled_Delta_low, Some(0.2 * 1.5));
        assert_eq!((m.n_connected, m.n_disconnected), (4, 2));
        assert!(m.is_defined());
    }

    #[test]
    fn margins_all_disconnected() {
        let a = CombinationMatrix {
            a: Array2::<f64>::zeros((3, 3)),
            rho: 0.5,
            kappa: 0.5,
        };
        let m = margins(&est(Array2::<f64>::eye(3)), &a, 3, 0.5).unwrap();
        assert!(!m.is_defined());
        assert_eq!(m.Delta_low, None);
        assert_eq!(m.delta_high, Some(0.0));
    }
}
