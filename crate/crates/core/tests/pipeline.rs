use nettomo::clustering::{recover_graph, recovery_indicator};
use nettomo::combination::{apply_policy, CombinationPolicy};
use nettomo::correlation::{empirical_correlations, exact_pair, exact_pair_on};
use nettomo::diffusion::{simulate, DiffusionConfig, SampleBlock};
use nettomo::estimators::{regularized_granger, sample_estimator, EstimatorKind};
use nettomo::graph::{generate_er, sample_observation_set};
use nettomo::harness::{
    run_experiment, run_margin_study, with_threads, EstimatorSpec, ExperimentConfig, PairClass, SourceKind,
};
use nettomo::linalg::{max_abs, max_abs_diff};
use nettomo::rng::derive_seed;

fn config(json: &str) -> ExperimentConfig {
    serde_json::from_str(json).unwrap()
}

#[test]
fn granger_recovers_subgraphs_at_a_thousand_nodes() {
    let (n, p, xi) = (1000, 0.1, 0.6);
    let seeds = 50;
    let hits = (0..seeds)
        .filter(|&k| {
            let g = generate_er(n, p, derive_seed(100, &[k, 1])).unwrap();
            let a = apply_policy(&g, CombinationPolicy::Metropolis { rho: 0.99 }).unwrap();
            let s = sample_observation_set(n, xi, derive_seed(100, &[k, 2])).unwrap();
            let pair = exact_pair_on(&a, 1.0, &s).unwrap();
            let est = sample_estimator(EstimatorKind::Granger, &pair).unwrap();
            recovery_indicator(&recover_graph(&est).unwrap(), &g.induced(&s)).unwrap()
        })
        .count();
    assert!(hits as f64 >= 0.9 * seeds as f64, "{hits}/{seeds}");
}

#[test]
fn disconnected_entries_concentrate_near_the_bias() {
    let cfg = config(
        r#"{"regime": {"kind": "dense", "p": 0.1}, "policy": {"kind": "metropolis", "rho": 0.99},
            "xi": 0.6, "n_sweep": [1000], "estimators": [{"kind": "granger", "source": "exact"}],
            "master_seed": 3}"#,
    );
    let spec = EstimatorSpec {
        kind: EstimatorKind::Granger,
        source: SourceKind::Exact,
    };
    let study = run_margin_study(&cfg, 1000, spec, 0).unwrap();
    let eta = study.eta.unwrap();
    let (lo, hi) = (eta - 0.15 * eta.abs() - 0.05, eta + 0.15 * eta.abs() + 0.05);
    let dis: Vec<f64> = study
        .entries
        .iter()
        .filter(|e| e.class == PairClass::Disconnected)
        .map(|e| e.scaled_estimate)
        .collect();
    let inside = dis.iter().filter(|&&v| v >= lo && v <= hi).count();
    assert!(inside as f64 >= 0.95 * dis.len() as f64, "{inside}/{}", dis.len());
}

#[test]
fn sample_correlations_approach_exact_ones() {
    let g = generate_er(15, 0.3, 2).unwrap();
    let a = apply_policy(&g, CombinationPolicy::Laplacian { rho: 0.8, lambda: 0.7 }).unwrap();
    let s = sample_observation_set(15, 0.6, 3).unwrap();
    let exact = exact_pair(&a, 1.0).unwrap().restrict(&s).unwrap();
    let block = simulate(&a, &DiffusionConfig::new(1.0, 200_000), &s, 4).unwrap();
    let emp = empirical_correlations(&block).unwrap();
    let scale = max_abs(exact.r0.view());
    assert!(max_abs_diff(emp.r0.view(), exact.r0.view()) < 0.05 * scale);
    assert!(max_abs_diff(emp.r1.view(), exact.r1.view()) < 0.05 * scale);
}

#[test]
fn regularized_granger_tracks_plain_granger_on_long_samples() {
    let g = generate_er(20, 0.3, 8).unwrap();
    let a = apply_policy(&g, CombinationPolicy::Metropolis { rho: 0.9 }).unwrap();
    let s = sample_observation_set(20, 0.5, 9).unwrap();
    let block = simulate(&a, &DiffusionConfig::new(1.0, 20_000), &s, 10).unwrap();
    let pair = empirical_correlations(&block).unwrap();
    let plain = sample_estimator(EstimatorKind::Granger, &pair).unwrap();
    let reg = regularized_granger(&pair).unwrap();
    let inside = plain
        .values
        .rows()
        .into_iter()
        .all(|r| r.iter().map(|v| v.abs()).sum::<f64>() <= 1.0);
    assert!(inside);
    assert!(max_abs_diff(plain.values.view(), reg.values.view()) < 1e-6);
}

#[test]
fn saved_blocks_reload_bit_for_bit() {
    let g = generate_er(12, 0.4, 1).unwrap();
    let a = apply_policy(&g, CombinationPolicy::Metropolis { rho: 0.9 }).unwrap();
    let s = sample_observation_set(12, 0.5, 2).unwrap();
    let block = simulate(&a, &DiffusionConfig::new(0.7, 50), &s, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    block.save(dir.path(), "b").unwrap();
    let back = SampleBlock::load(dir.path(), "b").unwrap();
    assert_eq!(back, block);
}

fn small_sweep() -> ExperimentConfig {
    config(
        r#"{"regime": {"kind": "uniform_sparse", "c": 1.0, "a": 0.5},
            "policy": {"kind": "laplacian", "rho": 0.95, "lambda": 0.9},
            "xi": 0.5, "n_sweep": [40, 80],
            "estimators": [
                {"kind": "granger", "source": "exact"},
                {"kind": "residual", "source": "exact"},
                {"kind": "one_lag", "source": "sample"},
                {"kind": "regularized_granger", "source": "sample"}
            ],
            "schedule": {"n_ref": 4000},
            "mc_runs": 6,
            "master_seed": 17}"#,
    )
}

#[test]
fn experiments_do_not_depend_on_thread_count() {
    let cfg = small_sweep();
    let one = with_threads(Some(1), || run_experiment(&cfg)).unwrap().unwrap();
    let four = with_threads(Some(4), || run_experiment(&cfg)).unwrap().unwrap();
    assert_eq!(one.rows, four.rows);
    assert_eq!(one.to_csv().unwrap(), four.to_csv().unwrap());
    for r in &one.rows {
        assert_eq!(r.recovery_prob * r.mc_runs as f64, r.successes as f64);
        assert!(r.successes + r.failed_runs <= r.mc_runs);
        assert_eq!((r.run_first, r.run_last, r.master_seed), (0, 5, 17));
    }
    let mut other = cfg.clone();
    other.master_seed = 18;
    let moved = run_experiment(&other).unwrap();
    assert_ne!(moved.rows, one.rows);
}

#[test]
fn experiment_outputs_are_written() {
    let cfg = small_sweep();
    let res = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    res.write(dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("experiment.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["master_seed"], 17);
    assert_eq!(manifest["timing"].as_array().unwrap().len(), 2);
}
