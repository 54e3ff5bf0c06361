use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use nettomo::clustering::recover;
use nettomo::combination::{apply_policy, CombinationPolicy};
use nettomo::correlation::empirical_correlations;
use nettomo::diffusion::{simulate, DiffusionConfig, SampleBlock};
use nettomo::estimators::{sample_estimator, EstimatorKind};
use nettomo::graph::{generate_er, sample_observation_set, ConnectionRegime};
use nettomo::harness::{run_experiment, run_margin_study, EstimatorSpec, ExperimentConfig, SourceKind};
use nettomo::rng::{derive_seed, stream};
use nettomo::theory::predict;

#[derive(Parser)]
#[command(name = "nettomo", version, about = "Topology inference on partially observed diffusion networks")]
struct Cli {
    /// Worker threads; falls back to NETTOMO_THREADS, then to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a network and write the probed trajectories as a sample block.
    Simulate(SimulateArgs),
    /// Estimate the probed block of a saved sample block and recover its graph.
    Estimate(EstimateArgs),
    /// Print the limiting bias and gap of an estimator.
    Predict(PredictArgs),
    /// Run a Monte Carlo sweep over network sizes.
    Experiment(ExperimentArgs),
    /// Write the scatter of scaled estimated entries for one run.
    Margins(MarginsArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Directory holding `<stem>.csv` and `<stem>.json`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "block")]
    stem: String,
    #[arg(long, default_value = "granger")]
    estimator: EstimatorKind,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    estimator: EstimatorKind,
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    kappa: f64,
    #[arg(long)]
    xi: f64,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MarginsArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "n")]
    n_nodes: usize,
    #[arg(long, default_value = "granger")]
    estimator: EstimatorKind,
    #[arg(long, default_value = "exact")]
    source: String,
    #[arg(long, default_value_t = 0)]
    run: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    n_nodes: usize,
    regime: ConnectionRegime,
    policy: CombinationPolicy,
    xi: f64,
    #[serde(default = "one")]
    sigma: f64,
    n_samples: usize,
    #[serde(default)]
    burn_in: Option<usize>,
    #[serde(default)]
    seed: u64,
}

fn one() -> f64 {
    1.0
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<nettomo::Error> for Failure {
    fn from(e: nettomo::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

/// Reads a JSON config, reporting the offending field path and position.
fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        Failure::Config(format!("{}: field `{}`: {}", path.display(), e.path(), e.inner()))
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}

fn run_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut cfg: SimulateConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.policy.validate().map_err(config_err)?;
    let p = cfg.regime.p_of(cfg.n_nodes).map_err(config_err)?;
    let graph = generate_er(cfg.n_nodes, p, derive_seed(cfg.seed, &[stream::GRAPH]))?;
    let a = apply_policy(&graph, cfg.policy)?;
    let s = sample_observation_set(cfg.n_nodes, cfg.xi, derive_seed(cfg.seed, &[stream::OBSERVATION]))
        .map_err(config_err)?;
    let diffusion = DiffusionConfig {
        sigma: cfg.sigma,
        n_samples: cfg.n_samples,
        burn_in: cfg.burn_in,
    };
    let block = simulate(&a, &diffusion, &s, derive_seed(cfg.seed, &[stream::SIMULATION]))?;
    ensure_dir(&args.out)?;
    block.save(&args.out, "block")?;
    write_json(&args.out.join("graph.json"), &graph)?;
    write_json(&args.out.join("matrix.json"), &a)?;
    write_json(&args.out.join("config.json"), &cfg)?;
    println!(
        "wrote {} samples for {} of {} nodes ({} edges) to {}",
        cfg.n_samples,
        s.len(),
        cfg.n_nodes,
        graph.edge_count(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RecoveredGraph {
    s_indices: Vec<usize>,
    /// Edges between original node labels.
    edges: Vec<[usize; 2]>,
    split_index: Option<usize>,
    c0: f64,
    c1: f64,
}

fn run_estimate(args: EstimateArgs) -> Result<(), Failure> {
    let block = SampleBlock::load(&args.input, &args.stem).map_err(config_err)?;
    let pair = empirical_correlations(&block)?;
    let est = sample_estimator(args.estimator, &pair)?;
    let rec = recover(&est)?;
    let labels = block.s.indices();
    let recovered = RecoveredGraph {
        s_indices: labels.to_vec(),
        edges: rec.graph.edges().into_iter().map(|(i, j)| [labels[i], labels[j]]).collect(),
        split_index: rec.cluster.split_index,
        c0: rec.cluster.c0,
        c1: rec.cluster.c1,
    };
    ensure_dir(&args.out)?;
    write_json(&args.out.join(format!("{}.estimate.json", args.stem)), &est)?;
    write_json(&args.out.join(format!("{}.recovered.json", args.stem)), &recovered)?;
    println!(
        "{}: {} probed nodes, {} recovered edges",
        args.estimator,
        labels.len(),
        recovered.edges.len()
    );
    Ok(())
}

fn run_predict(args: PredictArgs) -> Result<(), Failure> {
    let pr = predict(args.estimator, args.rho, args.kappa, args.xi, args.p, args.sigma * args.sigma)
        .map_err(config_err)?;
    println!("estimator={}", pr.estimator);
    println!("eta={}", pr.eta);
    println!("gamma={}", pr.gamma);
    println!("eta_plus_gamma={}", pr.connected_level());
    Ok(())
}

fn load_experiment(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig, Failure> {
    let mut cfg: ExperimentConfig = read_config(path)?;
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    if out.is_some() {
        cfg.output_dir = out;
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn run_experiment_cmd(args: ExperimentArgs) -> Result<(), Failure> {
    let cfg = load_experiment(&args.config, args.seed, args.out)?;
    let res = run_experiment(&cfg)?;
    match &cfg.output_dir {
        Some(dir) => {
            res.write(dir)?;
            println!("wrote {}", dir.join("experiment.csv").display());
        }
        None => print!("{}", res.to_csv()?),
    }
    Ok(())
}

fn run_margins(args: MarginsArgs) -> Result<(), Failure> {
    let cfg = load_experiment(&args.config, args.seed, args.out)?;
    let source = match args.source.as_str() {
        "exact" => SourceKind::Exact,
        "sample" => SourceKind::Sample,
        other => return Err(Failure::Config(format!("unknown source {other:?}; use exact or sample"))),
    };
    let spec = EstimatorSpec {
        kind: args.estimator,
        source,
    };
    let study = run_margin_study(&cfg, args.n_nodes, spec, args.run)?;
    match &cfg.output_dir {
        Some(dir) => {
            study.write(dir)?;
            println!("wrote {}", dir.join("margins.csv").display());
        }
        None => print!("{}", study.to_csv()?),
    }
    let r = &study.report;
    log::info!(
        "scaled delta_high {:?}, Delta_low {:?}, eta {:?}, eta+gamma {:?}",
        r.scaled_delta_high,
        r.scaled_Delta_low,
        study.eta,
        study.eta_plus_gamma
    );
    Ok(())
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("NETTOMO_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Config(format!("NETTOMO_THREADS={v:?} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(k) = threads(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Estimate(a) => run_estimate(a),
        Command::Predict(a) => run_predict(a),
        Command::Experiment(a) => run_experiment_cmd(a),
        Command::Margins(a) => run_margins(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
