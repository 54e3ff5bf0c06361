//! Structure recovery of partially observed diffusion networks.
//!
//! A first-order vector autoregression `y_n = A y_{n-1} + sigma x_n` runs on
//! an Erdős–Rényi graph whose edges are the support of `A`. Only a subset `S`
//! of nodes is probed. The crate computes the Granger, one-lag, residual and
//! regularized Granger estimates of `A_S` from exact or empirical
//! correlations, clusters their off-diagonal entries into two classes, and
//! compares the result with the true subgraph. Closed-form bias and gap
//! predictions and a Monte Carlo harness complete the toolkit.

pub mod clustering;
pub mod combination;
pub mod correlation;
pub mod diffusion;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod lp;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
