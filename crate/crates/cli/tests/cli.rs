use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nettomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nettomo"))
        .args(args)
        .env_remove("NETTOMO_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn predict_prints_granger_gap() {
    let o = nettomo(&["predict", "--estimator", "granger", "--rho", "0.99", "--kappa", "0.99", "--xi", "0.6", "--p", "0.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l == "gamma=0.99"));
}

#[test]
fn predict_rejects_out_of_domain_parameters() {
    let o = nettomo(&["predict", "--estimator", "residual", "--rho", "1.2", "--kappa", "0.5", "--xi", "0.5", "--p", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_is_a_config_error() {
    let o = nettomo(&["experiment", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = nettomo(&["experiment", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        "{\n  \"regime\": {\"kind\": \"dense\", \"p\": 0.1},\n  \"policy\": {\"kind\": \"metropolis\", \"rho\": \"high\"}\n}",
    );
    let o = nettomo(&["experiment", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("policy"), "{err}");

    let cfg = write(
        dir.path(),
        "bad_xi.json",
        "{\n  \"regime\": {\"kind\": \"dense\", \"p\": 0.1},\n  \"xi\": \"half\"\n}",
    );
    let o = nettomo(&["experiment", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("field `xi`") && err.contains("line 3"), "{err}");
}

#[test]
fn invalid_sweep_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"regime": {"kind": "dense", "p": 0.2}, "policy": {"kind": "metropolis", "rho": 0.9},
            "xi": 0.5, "n_sweep": [40, 20], "estimators": [{"kind": "granger", "source": "exact"}]}"#,
    );
    let o = nettomo(&["experiment", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn simulate_then_estimate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sim.json",
        r#"{"n_nodes": 40, "regime": {"kind": "dense", "p": 0.2}, "policy": {"kind": "metropolis", "rho": 0.9},
            "xi": 0.5, "n_samples": 3000, "seed": 4}"#,
    );
    let run = dir.path().join("run");
    let o = nettomo(&["simulate", "--config", &cfg, "--out", run.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["block.csv", "block.json", "graph.json", "matrix.json"] {
        assert!(run.join(name).exists(), "{name}");
    }
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("est{k}"));
        let o = nettomo(&["estimate", "--input", run.to_str().unwrap(), "--estimator", "one_lag", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push((
            fs::read(out.join("block.estimate.json")).unwrap(),
            fs::read(out.join("block.recovered.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn experiment_and_margins_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"regime": {"kind": "dense", "p": 0.2}, "policy": {"kind": "laplacian", "rho": 0.95, "lambda": 0.8},
            "xi": 0.6, "n_sweep": [30, 60], "estimators": [{"kind": "granger", "source": "exact"},
            {"kind": "regularized_granger", "source": "sample"}], "schedule": {"n_ref": 3000}, "mc_runs": 3,
            "master_seed": 9}"#,
    );
    let out = dir.path().join("exp");
    let o = nettomo(&["--threads", "2", "experiment", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("experiment.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(out.join("manifest.json").exists());

    let o = nettomo(&["margins", "--config", &cfg, "--n", "60", "--estimator", "residual", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("margins.csv")).unwrap();
    assert!(table.starts_with("pair_index,i,j,true_a,scaled_estimate,class"));
    assert_eq!(table.lines().count(), 1 + 36 * 35);
}
