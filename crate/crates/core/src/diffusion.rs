//! Simulation of `y_n = A y_{n-1} + sigma x_n` with standard Gaussian input.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::combination::CombinationMatrix;
use crate::error::{Error, Result};
use crate::graph::ObservationSet;
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub sigma: f64,
    pub n_samples: usize,
    /// `None` draws `y_0` from the stationary law. `Some(k)` starts from zero
    /// and discards `k` warm-up steps instead, which avoids factoring an
    /// `N x N` matrix.
    #[serde(default)]
    pub burn_in: Option<usize>,
}

impl DiffusionConfig {
    pub fn new(sigma: f64, n_samples: usize) -> Self {
        Self {
            sigma,
            n_samples,
            burn_in: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::ParameterDomain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.n_samples == 0 {
            return Err(Error::ParameterDomain("n_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Observed outputs: row `l` holds the trajectory of probed node `S[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBlock {
    pub s: ObservationSet,
    pub data: Array2<f64>,
    pub sigma: f64,
    pub seed: u64,
}

impl SampleBlock {
    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }
}

/// Row-compressed copy of `A` for the recursion.
struct SparseRows {
    start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseRows {
    fn new(a: ArrayView2<f64>) -> Self {
        let mut start = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for row in a.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            start.push(cols.len());
        }
        Self { start, cols, vals }
    }

    fn mul_into(&self, y: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let (lo, hi) = (self.start[i], self.start[i + 1]);
            *o = self.cols[lo..hi]
                .iter()
                .zip(&self.vals[lo..hi])
                .map(|(&j, &v)| v * y[j])
                .sum();
        }
    }
}

fn gaussian_fill(rng: &mut Rng, buf: &mut [f64]) {
    for v in buf.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Draws `y_0 ~ N(0, sigma^2 (I - A^2)^{-1})` as `sigma L^{-T} z` where
/// `L L^T = I - A^2`.
fn stationary_initial_state(a: &CombinationMatrix, sigma: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    let n = a.n();
    let chol = a.stability_factor().map_err(|e| Error::Factorization(Box::new(e)))?;
    let mut z = Array2::<f64>::zeros((n, 1));
    gaussian_fill(rng, z.as_slice_mut().expect("standard layout"));
    chol.solve_upper_in_place(z.view_mut());
    Ok(z.iter().map(|v| sigma * v).collect())
}

/// Runs the recursion and hands every full state `y_1..y_n` to `emit`.
///
/// Random draws happen in a fixed order (initial state, then `N` inputs per
/// step), so two runs with equal `(A, cfg, seed)` are bit-identical.
pub fn simulate_stream(
    a: &CombinationMatrix,
    cfg: &DiffusionConfig,
    seed: u64,
    mut emit: impl FnMut(&[f64]),
) -> Result<()> {
    cfg.validate()?;
    if !(a.inf_norm() < 1.0) {
        return Err(Error::ParameterDomain(format!(
            "combination matrix is not stable (max row sum {})",
            a.inf_norm()
        )));
    }
    let n = a.n();
    let mut rng = rng_from_seed(seed);
    let sparse = SparseRows::new(a.view());
    let mut y = match cfg.burn_in {
        None => stationary_initial_state(a, cfg.sigma, &mut rng)?,
        Some(_) => vec![0.0; n],
    };
    let mut next = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut step = |y: &mut Vec<f64>, next: &mut Vec<f64>, rng: &mut Rng| {
        gaussian_fill(rng, &mut x);
        sparse.mul_into(y, next);
        for (v, xi) in next.iter_mut().zip(&x) {
            *v += cfg.sigma * xi;
        }
        std::mem::swap(y, next);
    };
    for _ in 0..cfg.burn_in.unwrap_or(0) {
        step(&mut y, &mut next, &mut rng);
    }
    for _ in 0..cfg.n_samples {
        step(&mut y, &mut next, &mut rng);
        emit(&y);
    }
    Ok(())
}

/// Simulates and keeps only the rows in `s`.
pub fn simulate(
    a: &CombinationMatrix,
    cfg: &DiffusionConfig,
    s: &ObservationSet,
    seed: u64,
) -> Result<SampleBlock> {
    if s.n() != a.n() {
        return Err(Error::ShapeMismatch {
            expected: (a.n(), a.n()),
            found: (s.n(), s.n()),
        });
    }
    let idx = s.indices();
    let mut data = Array2::<f64>::zeros((idx.len(), cfg.n_samples));
    let mut t = 0;
    simulate_stream(a, cfg, seed, |y| {
        for (l, &i) in idx.iter().enumerate() {
            data[[l, t]] = y[i];
        }
        t += 1;
    })?;
    Ok(SampleBlock {
        s: s.clone(),
        data,
        sigma: cfg.sigma,
        seed,
    })
}

/// Full-observability trajectory, `N x n`.
pub fn simulate_full(a: &CombinationMatrix, cfg: &DiffusionConfig, seed: u64) -> Result<Array2<f64>> {
    let mut data = Array2::<f64>::zeros((a.n(), cfg.n_samples));
    let mut t = 0;
    simulate_stream(a, cfg, seed, |y| {
        data.column_mut(t).assign(&ndarray::ArrayView1::from(y));
        t += 1;
    })?;
    Ok(data)
}

/// Metadata written next to a block's CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSidecar {
    pub n: usize,
    pub n_nodes: usize,
    pub sigma: f64,
    pub seed: u64,
    pub s_indices: Vec<usize>,
}

impl SampleBlock {
    pub fn sidecar(&self) -> BlockSidecar {
        BlockSidecar {
            n: self.n_samples(),
            n_nodes: self.s.n(),
            sigma: self.sigma,
            seed: self.seed,
            s_indices: self.s.indices().to_vec(),
        }
    }

    /// One CSV line per probed node: `node_<id>,y(1),...,y(n)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (l, &node) in self.s.indices().iter().enumerate() {
            let _ = write!(out, "node_{node}");
            for v in self.data.row(l) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        let side = serde_json::to_string_pretty(&self.sidecar())?;
        std::fs::write(dir.join(format!("{stem}.json")), side + "\n")?;
        Ok(())
    }

    pub fn from_csv(csv: &str, side: &BlockSidecar) -> Result<Self> {
        let mut labels = Vec::new();
        let mut flat = Vec::new();
        for (lineno, line) in csv.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let mut fields = line.split(',');
            let label = fields.next().unwrap_or_default();
            let node: usize = label
                .strip_prefix("node_")
                .and_then(|id| id.parse().ok())
                .ok_or_else(|| {
                    Error::Format(format!("line {}: bad row label {label:?}", lineno + 1))
                })?;
            labels.push(node);
            let before = flat.len();
            for f in fields {
                flat.push(f.trim().parse::<f64>().map_err(|e| {
                    Error::Format(format!("line {}: {e} in field {f:?}", lineno + 1))
                })?);
            }
            if flat.len() - before != side.n {
                return Err(Error::Format(format!(
                    "line {}: expected {} samples, found {}",
                    lineno + 1,
                    side.n,
                    flat.len() - before
                )));
            }
        }
        if labels != side.s_indices {
            return Err(Error::Format("CSV row labels disagree with sidecar s_indices".into()));
        }
        let s = ObservationSet::new(side.n_nodes, labels.clone())?;
        if s.indices() != labels.as_slice() {
            return Err(Error::Format("CSV rows must be sorted by node id".into()));
        }
        let data = Array2::from_shape_vec((labels.len(), side.n), flat)
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self {
            s,
            data,
            sigma: side.sigma,
            seed: side.seed,
        })
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let side: BlockSidecar =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let csv = std::fs::read_to_string(dir.join(format!("{stem}.csv")))?;
        Self::from_csv(&csv, &side)
    }
}

/// Per-row sample variance around zero; a convenience for diagnostics.
pub fn row_second_moments(data: ArrayView2<f64>) -> Array1<f64> {
    let n = data.ncols() as f64;
    data.rows().into_iter().map(|r| r.dot(&r) / n).collect()
}
