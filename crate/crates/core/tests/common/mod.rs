//! Helpers shared by the integration tests. The dense solver here is plain
//! Gaussian elimination with partial pivoting, kept independent of the
//! Cholesky path used by the library.

#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use nettomo::combination::{apply_policy, CombinationMatrix, CombinationPolicy};
use nettomo::graph::{generate_er, sample_observation_set, Graph, ObservationSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves `M X = B` by LU with partial pivoting.
pub fn lu_solve(m: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let n = m.nrows();
    let mut a = m.to_owned();
    let mut x = b.to_owned();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[[i, k]].abs().total_cmp(&a[[j, k]].abs()))
            .unwrap();
        assert!(a[[piv, k]].abs() > 1e-300, "singular matrix in oracle");
        if piv != k {
            for c in 0..n {
                a.swap([k, c], [piv, c]);
            }
            for c in 0..x.ncols() {
                x.swap([k, c], [piv, c]);
            }
        }
        for i in (k + 1)..n {
            let f = a[[i, k]] / a[[k, k]];
            if f == 0.0 {
                continue;
            }
            for c in k..n {
                a[[i, c]] -= f * a[[k, c]];
            }
            for c in 0..x.ncols() {
                x[[i, c]] -= f * x[[k, c]];
            }
        }
    }
    for k in (0..n).rev() {
        for c in 0..x.ncols() {
            let mut v = x[[k, c]];
            for j in (k + 1)..n {
                v -= a[[k, j]] * x[[j, c]];
            }
            x[[k, c]] = v / a[[k, k]];
        }
    }
    x
}

pub fn lu_inverse(m: ArrayView2<f64>) -> Array2<f64> {
    lu_solve(m, Array2::<f64>::eye(m.nrows()).view())
}

pub fn sub(m: ArrayView2<f64>, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| m[[rows[i], cols[j]]])
}

pub fn max_abs_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub struct Instance {
    pub graph: Graph,
    pub a: CombinationMatrix,
    pub s: ObservationSet,
    pub sigma: f64,
}

/// Random graph, random policy, random probed set, random noise level.
pub fn random_instance(seed: u64, n_range: std::ops::RangeInclusive<usize>) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(n_range);
    let p = rng.random_range(0.08..0.5);
    let graph = generate_er(n, p, rng.random()).unwrap();
    let rho = rng.random_range(0.5..0.99);
    let policy = if rng.random_bool(0.5) {
        CombinationPolicy::Metropolis { rho }
    } else {
        CombinationPolicy::Laplacian {
            rho,
            lambda: rng.random_range(0.2..1.0),
        }
    };
    let a = apply_policy(&graph, policy).unwrap();
    let xi = rng.random_range(0.3..0.85);
    let s = sample_observation_set(n, xi, rng.random()).unwrap();
    let sigma = rng.random_range(0.5..2.0);
    Instance { graph, a, s, sigma }
}
