//! Closed-form limits of the scaled estimates (bias `eta`, gap `Gamma`) and
//! the sample-size law `n(N) ~ (N p_N)^2 log S`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::graph::ConnectionRegime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub rho: f64,
    pub kappa: f64,
    pub xi: f64,
    pub p: f64,
    pub sigma2: f64,
}

/// Scaled disconnected entries concentrate at `eta`, connected ones at
/// `eta + gamma`, under the scaling `s_N = N p_N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyPrediction {
    pub estimator: EstimatorKind,
    pub eta: f64,
    pub gamma: f64,
    pub inputs: TheoryInputs,
}

impl ConsistencyPrediction {
    pub fn connected_level(&self) -> f64 {
        self.eta + self.gamma
    }
}

pub fn scaling(n_nodes: usize, p: f64) -> f64 {
    n_nodes as f64 * p
}

/// The regularized Granger estimator shares the Granger limit.
pub fn predict(
    kind: EstimatorKind,
    rho: f64,
    kappa: f64,
    xi: f64,
    p: f64,
    sigma2: f64,
) -> Result<ConsistencyPrediction> {
    if !(0.0 < kappa && kappa <= rho && rho < 1.0) {
        return Err(Error::ParameterDomain(format!(
            "need 0 < kappa <= rho < 1, got rho={rho}, kappa={kappa}"
        )));
    }
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::ParameterDomain(format!("need 0 <= xi < 1, got {xi}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::ParameterDomain(format!("need sigma^2 > 0, got {sigma2}")));
    }
    let (eta, gamma) = match kind {
        EstimatorKind::Granger | EstimatorKind::RegularizedGranger => {
            let eta = kappa * kappa * p * (2.0 * rho - kappa) * (1.0 - xi)
                / (1.0 - (rho * rho - 2.0 * rho * kappa * xi + kappa * kappa * xi));
            (eta, kappa)
        }
        EstimatorKind::OneLag => {
            let z = rho - kappa;
            let q = (1.0 - z * z).powi(2);
            let eta = sigma2 * kappa * kappa * p * (rho + rho * z * z + 2.0 * z) / ((1.0 - rho * rho) * q);
            (eta, sigma2 * kappa * (1.0 + z * z) / q)
        }
        EstimatorKind::Residual => {
            let d = (1.0 + rho - kappa).powi(2);
            (-sigma2 * kappa * kappa * p / ((1.0 + rho) * d), sigma2 * kappa / d)
        }
    };
    Ok(ConsistencyPrediction {
        estimator: kind,
        eta,
        gamma,
        inputs: TheoryInputs {
            rho,
            kappa,
            xi,
            p,
            sigma2,
        },
    })
}

/// `n(N) = round(c (N p_N)^2 ln S(N))` with `S(N) = round(xi N)` and `c`
/// pinned by one reference point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSchedule {
    pub c: f64,
    pub regime: ConnectionRegime,
    pub xi: f64,
}

impl SampleSchedule {
    pub fn calibrate(n_ref: usize, n_nodes_ref: usize, regime: ConnectionRegime, xi: f64) -> Result<Self> {
        if n_ref < 2 {
            return Err(Error::InsufficientSamples(n_ref));
        }
        let raw = Self { c: 1.0, regime: regime.clone(), xi }.law(n_nodes_ref)?;
        if !(raw > 0.0) {
            return Err(Error::ParameterDomain(format!(
                "sample law vanishes at the reference size {n_nodes_ref}"
            )));
        }
        Ok(Self {
            c: n_ref as f64 / raw,
            regime,
            xi,
        })
    }

    fn law(&self, n_nodes: usize) -> Result<f64> {
        let p = self.regime.p_of(n_nodes)?;
        let s = (self.xi * n_nodes as f64).round();
        let np = n_nodes as f64 * p;
        Ok(np * np * s.max(1.0).ln())
    }

    /// Never below 2, the least count with a lag pair.
    pub fn n_of(&self, n_nodes: usize) -> Result<usize> {
        Ok(((self.c * self.law(n_nodes)?).round() as usize).max(2))
    }
}
