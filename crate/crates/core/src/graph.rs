//! Erdős–Rényi graphs, degree profiles, connection regimes and observation
//! subsets.

use std::collections::VecDeque;

use rand::distr::{Bernoulli, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Undirected simple graph stored as a dense byte adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct Graph {
    n: usize,
    adj: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphJson> for Graph {
    type Error = Error;

    fn try_from(raw: GraphJson) -> Result<Self> {
        let edges: Vec<(usize, usize)> = raw.edges.iter().map(|e| (e[0], e[1])).collect();
        Graph::from_edges(raw.n, &edges)
    }
}

impl From<Graph> for GraphJson {
    fn from(g: Graph) -> Self {
        GraphJson {
            n: g.n,
            edges: g.edges().into_iter().map(|(i, j)| [i, j]).collect(),
        }
    }
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adj: vec![0; n * n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                g.set_edge(i, j);
            }
        }
        g
    }

    /// Builds a graph from an edge list. Each edge must satisfy `i < j < n`.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(i, j) in edges {
            if j >= n {
                return Err(Error::IndexOutOfRange { index: j, n });
            }
            if i >= j {
                return Err(Error::Format(format!(
                    "edge [{i}, {j}] must have its first endpoint strictly below the second"
                )));
            }
            g.set_edge(i, j);
        }
        Ok(g)
    }

    /// Builds a graph from any symmetric 0/1 matrix-like predicate.
    pub fn from_fn(n: usize, mut edge: impl FnMut(usize, usize) -> bool) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if edge(i, j) {
                    g.set_edge(i, j);
                }
            }
        }
        g
    }

    fn set_edge(&mut self, i: usize, j: usize) {
        self.adj[i * self.n + j] = 1;
        self.adj[j * self.n + i] = 1;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j] != 0
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.adj[i * self.n..(i + 1) * self.n]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter_map(|(j, &g)| (g != 0).then_some(j))
    }

    /// Edges `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|&g| g as usize).sum::<usize>() / 2
    }

    /// Subgraph induced by `s`, relabeled to `0..|S|` in the order of `s`.
    pub fn induced(&self, s: &ObservationSet) -> Graph {
        let idx = s.indices();
        Graph::from_fn(idx.len(), |a, b| self.has_edge(idx[a], idx[b]))
    }
}

/// Draws `G ~ G(n, p)`: every unordered pair is an independent Bernoulli(p)
/// trial, visited in row-major upper-triangular order.
pub fn generate_er(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    if n < 2 {
        return Err(Error::ParameterDomain(format!("graph needs at least 2 nodes, got {n}")));
    }
    let coin = Bernoulli::new(p).map_err(|_| Error::InvalidProbability(p))?;
    let mut rng = rng_from_seed(seed);
    Ok(Graph::from_fn(n, |_, _| coin.sample(&mut rng)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeProfile {
    /// `d_i = 1 + |neighbors(i)|`: the neighborhood size including the node.
    pub degrees: Vec<usize>,
    pub d_min: usize,
    pub d_max: usize,
}

pub fn degrees(g: &Graph) -> DegreeProfile {
    let degrees: Vec<usize> = (0..g.n())
        .map(|i| 1 + g.row(i).iter().map(|&v| v as usize).sum::<usize>())
        .collect();
    let d_min = degrees.iter().copied().min().unwrap_or(1);
    let d_max = degrees.iter().copied().max().unwrap_or(1);
    DegreeProfile {
        degrees,
        d_min,
        d_max,
    }
}

pub fn is_connected(g: &Graph) -> bool {
    if g.n() == 0 {
        return true;
    }
    let mut seen = vec![false; g.n()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(u) = queue.pop_front() {
        for v in g.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                reached += 1;
                queue.push_back(v);
            }
        }
    }
    reached == g.n()
}

/// `(d_min / (n p), d_max / (n p))`.
pub fn concentration_ratio(profile: &DegreeProfile, n: usize, p: f64) -> Result<(f64, f64)> {
    if !(p > 0.0) {
        return Err(Error::ParameterDomain(format!("p must be positive, got {p}")));
    }
    let scale = n as f64 * p;
    Ok((profile.d_min as f64 / scale, profile.d_max as f64 / scale))
}

/// How the connection probability `p_N` scales with the network size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConnectionRegime {
    /// Constant `p`.
    Dense { p: f64 },
    /// `p_N = c log N / N^a` with `0 < a < 1`.
    UniformSparse { c: f64, a: f64 },
    /// `p_N = c (log N)^b / N` with `b < 1`, i.e. `N p_N` grows slower than
    /// `log N`.
    VerySparse { c: f64, b: f64 },
    /// Explicit `(N, p_N)` table; sizes outside the table are rejected.
    Custom { points: Vec<(usize, f64)> },
}

impl ConnectionRegime {
    pub fn p_of(&self, n: usize) -> Result<f64> {
        let nf = n as f64;
        let p = match self {
            Self::Dense { p } => *p,
            Self::UniformSparse { c, a } => {
                if !(*a > 0.0 && *a < 1.0) {
                    return Err(Error::ParameterDomain(format!(
                        "uniform-sparse exponent a must lie in (0, 1), got {a}"
                    )));
                }
                c * nf.ln() / nf.powf(*a)
            }
            Self::VerySparse { c, b } => {
                if *b >= 1.0 {
                    return Err(Error::ParameterDomain(format!(
                        "very-sparse exponent b must be below 1, got {b}"
                    )));
                }
                c * nf.ln().powf(*b) / nf
            }
            Self::Custom { points } => points
                .iter()
                .find(|(size, _)| *size == n)
                .map(|&(_, p)| p)
                .ok_or_else(|| {
                    Error::ParameterDomain(format!("custom regime has no entry for N = {n}"))
                })?,
        };
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::ParameterDomain(format!(
                "connection probability {p} at N = {n} is outside (0, 1]"
            )));
        }
        Ok(p)
    }
}

/// Sorted set of probed nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    n: usize,
    indices: Vec<usize>,
    xi_target: f64,
}

impl ObservationSet {
    /// Explicit probed set. Full observability (`|S| = n`) is permitted here so
    /// that the full-information identities can be exercised.
    pub fn new(n: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, n });
        }
        if indices.len() < 2 {
            return Err(Error::DegenerateSubset {
                n,
                size: indices.len(),
            });
        }
        let xi_target = indices.len() as f64 / n as f64;
        Ok(Self {
            n,
            indices,
            xi_target,
        })
    }

    pub fn all(n: usize) -> Result<Self> {
        Self::new(n, (0..n).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn xi_target(&self) -> f64 {
        self.xi_target
    }

    pub fn is_full(&self) -> bool {
        self.indices.len() == self.n
    }

    /// Unobserved nodes `S'`, sorted.
    pub fn complement(&self) -> Vec<usize> {
        let mut mask = vec![true; self.n];
        for &i in &self.indices {
            mask[i] = false;
        }
        (0..self.n).filter(|&i| mask[i]).collect()
    }
}

/// Draws `round(xi n)` probed nodes uniformly without replacement.
pub fn sample_observation_set(n: usize, xi: f64, seed: u64) -> Result<ObservationSet> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::ParameterDomain(format!("xi must lie in (0, 1), got {xi}")));
    }
    let size = (xi * n as f64).round() as usize;
    if size < 2 || size >= n {
        return Err(Error::DegenerateSubset { n, size });
    }
    let mut rng = rng_from_seed(seed);
    let indices = rand::seq::index::sample(&mut rng, n, size).into_vec();
    let mut set = ObservationSet::new(n, indices)?;
    set.xi_target = xi;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_probabilities() {
        let g = generate_er(4, 0.0, 1).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert!(degrees(&g).degrees.iter().all(|&d| d == 1));
        let g = generate_er(4, 1.0, 1).unwrap();
        assert_eq!(g, Graph::complete(4));
        assert!(degrees(&g).degrees.iter().all(|&d| d == 4));
    }

    #[test]
    fn invalid_probability_is_rejected() {
        assert!(matches!(generate_er(4, 1.5, 0), Err(Error::InvalidProbability(_))));
        assert!(matches!(generate_er(4, -0.1, 0), Err(Error::InvalidProbability(_))));
    }

    #[test]
    fn mean_degree_matches_binomial_moments() {
        let g = generate_er(1000, 0.1, 7).unwrap();
        let prof = degrees(&g);
        let mean = prof.degrees.iter().sum::<usize>() as f64 / 1000.0;
        let sigma = (999.0_f64 * 0.1 * 0.9).sqrt();
        assert!((mean - (1.0 + 99.9)).abs() < 3.0 * sigma, "mean degree {mean}");
    }

    #[test]
    fn generation_is_symmetric_and_reproducible() {
        let a = generate_er(60, 0.3, 42).unwrap();
        let b = generate_er(60, 0.3, 42).unwrap();
        assert_eq!(a, b);
        for i in 0..60 {
            assert!(!a.has_edge(i, i));
            for j in 0..60 {
                assert_eq!(a.has_edge(i, j), a.has_edge(j, i));
            }
        }
        assert_ne!(a, generate_er(60, 0.3, 43).unwrap());
    }

    #[test]
    fn path_degrees() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(degrees(&g).degrees, vec![2, 3, 2]);
    }

    #[test]
    fn connectivity() {
        assert!(!is_connected(&Graph::empty(3)));
        assert!(is_connected(&Graph::complete(3)));
        assert!(!is_connected(&Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap()));
    }

    #[test]
    fn isolated_node_iff_min_degree_one() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(degrees(&g).d_min, 1);
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(degrees(&g).d_min, 2);
    }

    #[test]
    fn observation_set_sizes() {
        assert_eq!(sample_observation_set(10, 0.6, 0).unwrap().len(), 6);
        assert!(matches!(
            sample_observation_set(5, 0.99, 0),
            Err(Error::DegenerateSubset { n: 5, size: 5 })
        ));
        let s = sample_observation_set(1000, 0.2, 3).unwrap();
        assert_eq!(s.len(), 200);
        assert!(s.indices().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s.complement().len(), 800);
    }

    #[test]
    fn concentration_ratio_trivial_cases() {
        let full = degrees(&Graph::complete(100));
        assert_eq!(concentration_ratio(&full, 100, 1.0).unwrap(), (1.0, 1.0));
        let empty = degrees(&Graph::empty(10));
        let (lo, hi) = concentration_ratio(&empty, 10, 0.5).unwrap();
        assert!((lo - 0.2).abs() < 1e-15 && (hi - 0.2).abs() < 1e-15);
    }

    #[test]
    fn regimes() {
        assert_eq!(ConnectionRegime::Dense { p: 0.1 }.p_of(500).unwrap(), 0.1);
        let fig6 = ConnectionRegime::UniformSparse { c: 0.25, a: 0.5 };
        let p = fig6.p_of(400).unwrap();
        assert!((p - 0.25 * 400f64.ln() / 20.0).abs() < 1e-15);
        assert!(ConnectionRegime::Dense { p: 0.0 }.p_of(10).is_err());
        let custom = ConnectionRegime::Custom {
            points: vec![(100, 0.2)],
        };
        assert_eq!(custom.p_of(100).unwrap(), 0.2);
        assert!(custom.p_of(200).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let g = generate_er(12, 0.4, 5).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        let back: Graph = serde_json::from_str(&text).unwrap();
        assert_eq!(g, back);
        assert!(serde_json::from_str::<Graph>(r#"{"n":3,"edges":[[2,1]]}"#).is_err());
        assert!(serde_json::from_str::<Graph>(r#"{"n":3,"edges":[[0,3]]}"#).is_err());
    }
}
