//! Monte Carlo sweeps: graph, combination matrix, correlations, estimate,
//! clustering, comparison with the true subgraph, aggregated per network size.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{margins, recover, recovery_indicator, MarginReport};
use crate::combination::{apply_policy, CombinationMatrix, CombinationPolicy};
use crate::correlation::{exact_pair_on, CorrelationAccumulator, CorrelationPair};
use crate::diffusion::{simulate_stream, DiffusionConfig};
use crate::error::{Error, Result};
use crate::estimators::{sample_estimator, EstimatorKind};
use crate::graph::{generate_er, sample_observation_set, ConnectionRegime, Graph, ObservationSet};
use crate::rng::{derive_seed, stream};
use crate::theory::{predict, SampleSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Exact,
    Sample,
}

impl SourceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Sample => "sample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub source: SourceKind,
}

/// Calibration point of the sample-size law. `n_nodes_ref` defaults to the
/// largest size in the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub n_ref: usize,
    #[serde(default)]
    pub n_nodes_ref: Option<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            n_ref: 500_000,
            n_nodes_ref: None,
        }
    }
}

fn default_sigma() -> f64 {
    1.0
}

fn default_mc_runs() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub regime: ConnectionRegime,
    pub policy: CombinationPolicy,
    pub xi: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub n_sweep: Vec<usize>,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default = "default_mc_runs")]
    pub mc_runs: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if self.n_sweep.is_empty() {
            return Err(Error::ParameterDomain("n_sweep is empty".into()));
        }
        if self.n_sweep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ParameterDomain("n_sweep must be strictly increasing".into()));
        }
        if self.mc_runs == 0 {
            return Err(Error::ParameterDomain("mc_runs must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::ParameterDomain("no estimators requested".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::ParameterDomain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::ParameterDomain(format!("xi must lie in (0, 1), got {}", self.xi)));
        }
        for spec in &self.estimators {
            if spec.kind == EstimatorKind::RegularizedGranger && spec.source == SourceKind::Exact {
                return Err(Error::ParameterDomain(
                    "regularized_granger is only defined on sample correlations".into(),
                ));
            }
        }
        for &n in &self.n_sweep {
            self.regime.p_of(n)?;
            let size = (self.xi * n as f64).round() as usize;
            if size < 2 || size >= n {
                return Err(Error::DegenerateSubset { n, size });
            }
        }
        if self.needs_samples() {
            self.schedule()?;
        }
        Ok(())
    }

    fn needs_samples(&self) -> bool {
        self.estimators.iter().any(|e| e.source == SourceKind::Sample)
    }

    fn needs_exact(&self) -> bool {
        self.estimators.iter().any(|e| e.source == SourceKind::Exact)
    }

    pub fn schedule(&self) -> Result<SampleSchedule> {
        let n_nodes_ref = self
            .schedule
            .n_nodes_ref
            .or_else(|| self.n_sweep.last().copied())
            .ok_or_else(|| Error::ParameterDomain("n_sweep is empty".into()))?;
        SampleSchedule::calibrate(self.schedule.n_ref, n_nodes_ref, self.regime.clone(), self.xi)
    }
}

/// One `(N, estimator)` point. Runs are keyed `derive_seed(master_seed,
/// [N, run])` for `run` in `run_first..=run_last`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    #[serde(rename = "N")]
    pub n_nodes: usize,
    pub estimator: EstimatorKind,
    pub source: SourceKind,
    pub n_samples: Option<usize>,
    pub mc_runs: usize,
    pub successes: usize,
    pub failed_runs: usize,
    pub recovery_prob: f64,
    pub stderr: f64,
    pub eta_theory: Option<f64>,
    pub gamma_theory: Option<f64>,
    pub mean_scaled_delta_high: Option<f64>,
    #[serde(rename = "mean_scaled_Delta_low")]
    pub mean_scaled_delta_low_connected: Option<f64>,
    pub master_seed: u64,
    pub run_first: usize,
    pub run_last: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeTiming {
    #[serde(rename = "N")]
    pub n_nodes: usize,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows: Vec<ExperimentRow>,
    pub timing: Vec<SizeTiming>,
}

impl ExperimentResult {
    pub fn row(&self, n_nodes: usize, kind: EstimatorKind, source: SourceKind) -> Option<&ExperimentRow> {
        self.rows
            .iter()
            .find(|r| r.n_nodes == n_nodes && r.estimator == kind && r.source == source)
    }

    /// Wall times live in the manifest so that the table itself only depends
    /// on the configuration.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    /// Writes `experiment.csv` and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("experiment.csv"), self.to_csv()?)?;
        let manifest = serde_json::json!({
            "config": self.config,
            "timing": self.timing,
        });
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

/// Everything a single run produces before estimation.
pub struct RunInstance {
    pub graph: Graph,
    pub a: CombinationMatrix,
    pub s: ObservationSet,
    pub truth: Graph,
    pub p: f64,
}

pub fn build_instance(cfg: &ExperimentConfig, n_nodes: usize, run_seed: u64) -> Result<RunInstance> {
    let p = cfg.regime.p_of(n_nodes)?;
    let graph = generate_er(n_nodes, p, derive_seed(run_seed, &[stream::GRAPH]))?;
    let a = apply_policy(&graph, cfg.policy)?;
    let s = sample_observation_set(n_nodes, cfg.xi, derive_seed(run_seed, &[stream::OBSERVATION]))?;
    let truth = graph.induced(&s);
    Ok(RunInstance { graph, a, s, truth, p })
}

/// Empirical `[R_0]_S`, `[R_1]_S` from `n_samples` simulated steps.
pub fn sample_pair(a: &CombinationMatrix, s: &ObservationSet, sigma: f64, n_samples: usize, seed: u64) -> Result<CorrelationPair> {
    let mut acc = CorrelationAccumulator::new(s.len(), false);
    let idx = s.indices();
    simulate_stream(a, &DiffusionConfig::new(sigma, n_samples), seed, |y| acc.push_selected(y, idx))?;
    acc.finish(idx.to_vec())
}

#[derive(Debug, Clone, Copy, Default)]
struct EstimatorOutcome {
    success: bool,
    failed: bool,
    scaled_delta_high: Option<f64>,
    scaled_delta_low_connected: Option<f64>,
}

fn run_once(cfg: &ExperimentConfig, n_nodes: usize, n_samples: Option<usize>, run: usize) -> Vec<EstimatorOutcome> {
    let run_seed = derive_seed(cfg.master_seed, &[n_nodes as u64, run as u64]);
    let failed_all = |e: Error| {
        log::warn!("N={n_nodes} run={run}: {e}");
        vec![
            EstimatorOutcome {
                failed: true,
                ..Default::default()
            };
            cfg.estimators.len()
        ]
    };
    let inst = match build_instance(cfg, n_nodes, run_seed) {
        Ok(i) => i,
        Err(e) => return failed_all(e),
    };
    let exact = if cfg.needs_exact() {
        Some(exact_pair_on(&inst.a, cfg.sigma, &inst.s))
    } else {
        None
    };
    let sample = match n_samples {
        Some(n) if cfg.needs_samples() => Some(sample_pair(
            &inst.a,
            &inst.s,
            cfg.sigma,
            n,
            derive_seed(run_seed, &[stream::SIMULATION]),
        )),
        _ => None,
    };
    cfg.estimators
        .iter()
        .map(|spec| {
            let pair = match spec.source {
                SourceKind::Exact => exact.as_ref(),
                SourceKind::Sample => sample.as_ref(),
            };
            let outcome = pair
                .ok_or_else(|| Error::ParameterDomain("missing correlations".into()))
                .and_then(|r| r.as_ref().map_err(|e| Error::Format(e.to_string())))
                .and_then(|pair| evaluate(spec.kind, pair, &inst, n_nodes));
            match outcome {
                Ok(o) => o,
                Err(e) => {
                    log::warn!("N={n_nodes} run={run} {}/{}: {e}", spec.kind, spec.source.as_str());
                    EstimatorOutcome {
                        failed: true,
                        ..Default::default()
                    }
                }
            }
        })
        .collect()
}

fn evaluate(kind: EstimatorKind, pair: &CorrelationPair, inst: &RunInstance, n_nodes: usize) -> Result<EstimatorOutcome> {
    let est = sample_estimator(kind, pair)?;
    let rec = recover(&est)?;
    let success = recovery_indicator(&rec.graph, &inst.truth)?;
    let m: MarginReport = margins(&est, &inst.a, n_nodes, inst.p)?;
    Ok(EstimatorOutcome {
        success,
        failed: false,
        scaled_delta_high: m.scaled_delta_high,
        scaled_delta_low_connected: m.scaled_Delta_low,
    })
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, count) = values.flatten().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Runs the sweep on the current rayon pool. Results depend only on the
/// configuration, never on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let schedule = if cfg.needs_samples() { Some(cfg.schedule()?) } else { None };
    let mut rows = Vec::new();
    let mut timing = Vec::new();
    for &n_nodes in &cfg.n_sweep {
        let start = Instant::now();
        let n_samples = schedule.as_ref().map(|s| s.n_of(n_nodes)).transpose()?;
        let p = cfg.regime.p_of(n_nodes)?;
        log::info!("N={n_nodes} p={p} n_samples={n_samples:?} runs={}", cfg.mc_runs);
        let outcomes: Vec<Vec<EstimatorOutcome>> = (0..cfg.mc_runs)
            .into_par_iter()
            .map(|run| run_once(cfg, n_nodes, n_samples, run))
            .collect();
        for (k, spec) in cfg.estimators.iter().enumerate() {
            let column = || outcomes.iter().map(|o| o[k]);
            let successes = column().filter(|o| o.success).count();
            let failed_runs = column().filter(|o| o.failed).count();
            let prob = successes as f64 / cfg.mc_runs as f64;
            let theory = predict(
                spec.kind,
                cfg.policy.rho(),
                cfg.policy.kappa(),
                cfg.xi,
                p,
                cfg.sigma * cfg.sigma,
            )
            .ok();
            rows.push(ExperimentRow {
                n_nodes,
                estimator: spec.kind,
                source: spec.source,
                n_samples: if spec.source == SourceKind::Sample { n_samples } else { None },
                mc_runs: cfg.mc_runs,
                successes,
                failed_runs,
                recovery_prob: prob,
                stderr: (prob * (1.0 - prob) / cfg.mc_runs as f64).sqrt(),
                eta_theory: theory.map(|t| t.eta),
                gamma_theory: theory.map(|t| t.gamma),
                mean_scaled_delta_high: mean(column().map(|o| o.scaled_delta_high)),
                mean_scaled_delta_low_connected: mean(column().map(|o| o.scaled_delta_low_connected)),
                master_seed: cfg.master_seed,
                run_first: 0,
                run_last: cfg.mc_runs - 1,
            });
        }
        timing.push(SizeTiming {
            n_nodes,
            wall_ms: start.elapsed().as_millis(),
        });
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        rows,
        timing,
    })
}

/// Runs `f` on a dedicated pool with `threads` workers, or on the global
/// pool when `threads` is `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::ParameterDomain(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    Disconnected,
    Connected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginEntry {
    pub pair_index: usize,
    /// Original node labels.
    pub i: usize,
    pub j: usize,
    pub true_a: f64,
    pub scaled_estimate: f64,
    pub class: PairClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginStudy {
    #[serde(rename = "N")]
    pub n_nodes: usize,
    pub estimator: EstimatorKind,
    pub source: SourceKind,
    pub run_seed: u64,
    pub scale: f64,
    pub eta: Option<f64>,
    pub eta_plus_gamma: Option<f64>,
    pub report: MarginReport,
    pub entries: Vec<MarginEntry>,
}

impl MarginStudy {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(e).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    /// Writes `margins.csv` and `margins.json` (everything but the entries).
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("margins.csv"), self.to_csv()?)?;
        let summary = serde_json::json!({
            "N": self.n_nodes,
            "estimator": self.estimator,
            "source": self.source,
            "run_seed": self.run_seed,
            "scale": self.scale,
            "eta": self.eta,
            "eta_plus_gamma": self.eta_plus_gamma,
            "report": self.report,
        });
        fs::write(dir.join("margins.json"), serde_json::to_string_pretty(&summary)?)?;
        Ok(())
    }
}

/// Scatter of scaled estimated entries for run `run` at size `n_nodes`.
/// Off-diagonal pairs are listed column by column over `A_S`, disconnected
/// pairs first.
pub fn run_margin_study(cfg: &ExperimentConfig, n_nodes: usize, spec: EstimatorSpec, run: usize) -> Result<MarginStudy> {
    let run_seed = derive_seed(cfg.master_seed, &[n_nodes as u64, run as u64]);
    let inst = build_instance(cfg, n_nodes, run_seed)?;
    let pair = match spec.source {
        SourceKind::Exact => exact_pair_on(&inst.a, cfg.sigma, &inst.s)?,
        SourceKind::Sample => {
            let n = cfg.schedule()?.n_of(n_nodes)?;
            sample_pair(&inst.a, &inst.s, cfg.sigma, n, derive_seed(run_seed, &[stream::SIMULATION]))?
        }
    };
    let est = sample_estimator(spec.kind, &pair)?;
    let report = margins(&est, &inst.a, n_nodes, inst.p)?;
    let idx = inst.s.indices();
    let k = idx.len();
    let mut entries = Vec::with_capacity(k * (k - 1));
    for j in 0..k {
        for i in 0..k {
            if i == j {
                continue;
            }
            let true_a = inst.a.a[[idx[i], idx[j]]];
            entries.push(MarginEntry {
                pair_index: 0,
                i: idx[i],
                j: idx[j],
                true_a,
                scaled_estimate: report.scale * est.values[[i, j]],
                class: if true_a == 0.0 {
                    PairClass::Disconnected
                } else {
                    PairClass::Connected
                },
            });
        }
    }
    entries.sort_by_key(|e| e.class == PairClass::Connected);
    for (pos, e) in entries.iter_mut().enumerate() {
        e.pair_index = pos;
    }
    let theory = predict(
        spec.kind,
        cfg.policy.rho(),
        cfg.policy.kappa(),
        cfg.xi,
        inst.p,
        cfg.sigma * cfg.sigma,
    )
    .ok();
    Ok(MarginStudy {
        n_nodes,
        estimator: spec.kind,
        source: spec.source,
        run_seed,
        scale: report.scale,
        eta: theory.map(|t| t.eta),
        eta_plus_gamma: theory.map(|t| t.connected_level()),
        report,
        entries,
    })
}
