//! Batch driver: train, compress, sweep, evaluate, project and audit.
//!
//! Exit codes: 0 on success, 2 on configuration or usage errors, 1 on
//! runtime failures.

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use lre_core::amc::{run_schedule, tolerance_sweep};
use lre_core::nn::{evaluate, io as model_io, train};
use lre_core::redundancy::analyze;
use lre_core::report::{layer_features, pca, CompressionReport};
use lre_core::Network;
use serde::Serialize;
use thiserror::Error;

pub use config::JobConfig;

pub const THREADS_ENV: &str = "LRE_PRUNE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] lre_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lre-prune", version, about = "Redundancy-guided structured pruning of small networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Job configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the configured architecture and write `model.lre` and `train_metrics.json`.
    Train(Common),
    /// Compress a trained model; writes `compressed.lre`, `report.json`, `steps.jsonl`, `perturbation.csv`.
    Compress {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Compress at each tolerance and write `sweep.csv`.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated tolerances in descending order, e.g. `0.05,0.02,0`.
        #[arg(long, default_value = "0.05,0.04,0.03,0.02,0.01,0")]
        epsilons: String,
    },
    /// Accuracy and parameter counts of a model; writes `eval.json`.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// 2-D PCA of a layer's outputs on the test split; writes `projection_layer<L>.csv`.
    Project {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Parametric layer index; defaults to the last hidden one.
        #[arg(long)]
        layer: Option<usize>,
    },
    /// Dump the redundancy analysis (S, A, residuals) of one layer as JSON.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        layer: usize,
    },
}

/// Writes `bytes` to a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn save_model(net: &Network<f32>, path: &Path) -> Result<(), CliError> {
    write_atomic(path, &model_io::to_bytes(net))
}

fn load_model(path: &Path) -> Result<Network<f32>, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("--model {}: {e}", path.display())))?;
    model_io::from_bytes(&bytes).map_err(|e| CliError::Config(format!("--model {}: {e}", path.display())))
}

fn check_model(cfg: &JobConfig, net: &Network<f32>, data: &lre_core::data::LabeledDataset) -> Result<(), CliError> {
    if net.input_shape() != data.sample_shape() || net.class_count() != data.class_count() {
        return Err(CliError::Config(format!(
            "model expects input {:?} and {} classes; dataset {:?} has {:?} and {}",
            net.input_shape(),
            net.class_count(),
            cfg.dataset,
            data.sample_shape(),
            data.class_count()
        )));
    }
    Ok(())
}

/// Resolved configuration plus output directory for one command.
pub struct Job {
    pub config: JobConfig,
    pub out: PathBuf,
}

impl Job {
    pub fn new(common: &Common) -> Result<Self, CliError> {
        let mut config = JobConfig::load(&common.config)?;
        if let Some(seed) = common.seed {
            config = config.with_seed(seed);
        }
        let out = common.out.clone().unwrap_or_else(|| config.output.dir.clone());
        Ok(Self { config, out })
    }
}

#[derive(Debug, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub train_accuracy: f64,
    pub params: lre_core::nn::ParamCount,
    pub seed: u64,
}

fn metrics(net: &Network<f32>, splits: &lre_core::data::Splits, seed: u64) -> Result<Metrics, CliError> {
    Ok(Metrics {
        accuracy: evaluate(net, &splits.heldout)?,
        test_accuracy: if splits.test.is_empty() {
            None
        } else {
            Some(evaluate(net, &splits.test)?)
        },
        train_accuracy: evaluate(net, &splits.train)?,
        params: net.count_params(),
        seed,
    })
}

pub fn cmd_train(job: &Job) -> Result<Metrics, CliError> {
    let splits = job.config.splits()?;
    let net = job.config.build_network(&splits.train)?;
    let outcome = train(&net, &splits.train, &job.config.train_config())?;
    let m = metrics(&outcome.network, &splits, job.config.seed)?;
    save_model(&outcome.network, &job.out.join("model.lre"))?;
    write_json(&job.out.join("train_metrics.json"), &m)?;
    Ok(m)
}

pub fn cmd_compress(job: &Job, model: &Path) -> Result<CompressionReport, CliError> {
    let teacher = load_model(model)?;
    let splits = job.config.splits()?;
    check_model(&job.config, &teacher, &splits.train)?;
    let cfg = job.config.amc_config();
    let outcome = run_schedule(&teacher, &splits, &cfg)?;
    let echo = serde_json::to_value(&job.config).expect("config serializes");
    let report = CompressionReport::new(&teacher, &outcome, echo, job.config.seed);
    report.verify()?;
    save_model(&outcome.network, &job.out.join("compressed.lre"))?;
    write_atomic(&job.out.join("report.json"), report.to_json().as_bytes())?;
    write_atomic(&job.out.join("steps.jsonl"), report.steps_jsonl().as_bytes())?;
    write_atomic(&job.out.join("perturbation.csv"), report.perturbation_csv().as_bytes())?;
    Ok(report)
}

pub fn parse_epsilons(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = |m: String| CliError::Config(format!("--epsilons: {m}"));
    let eps: Vec<f64> = text
        .split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")))
        })
        .collect::<Result<_, _>>()?;
    if eps.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(bad("tolerances must be finite and >= 0".into()));
    }
    if eps.windows(2).any(|w| w[1] > w[0]) {
        return Err(bad("tolerances must be in descending order".into()));
    }
    Ok(eps)
}

pub fn cmd_sweep(job: &Job, model: &Path, epsilons: &[f64]) -> Result<String, CliError> {
    let teacher = load_model(model)?;
    let splits = job.config.splits()?;
    check_model(&job.config, &teacher, &splits.train)?;
    let rows = tolerance_sweep(&teacher, &splits, &job.config.amc_config(), epsilons)?;
    let mut csv = String::from("epsilon,delta_params_pct,delta_acc_pct\n");
    for r in rows {
        csv.push_str(&format!("{},{},{}\n", r.epsilon, r.delta_params_pct, r.delta_acc_pct));
    }
    write_atomic(&job.out.join("sweep.csv"), csv.as_bytes())?;
    Ok(csv)
}

pub fn cmd_eval(job: &Job, model: &Path) -> Result<Metrics, CliError> {
    let net = load_model(model)?;
    let splits = job.config.splits()?;
    check_model(&job.config, &net, &splits.train)?;
    let m = metrics(&net, &splits, job.config.seed)?;
    write_json(&job.out.join("eval.json"), &m)?;
    Ok(m)
}

pub fn cmd_project(job: &Job, model: &Path, layer: Option<usize>) -> Result<PathBuf, CliError> {
    let net = load_model(model)?;
    let splits = job.config.splits()?;
    check_model(&job.config, &net, &splits.train)?;
    let layer = match layer {
        Some(l) => l,
        None => *net
            .prunable_layers()
            .last()
            .ok_or_else(|| CliError::Config("model has no hidden dense/conv layer".into()))?,
    };
    if layer >= net.layers().len() || !net.layers()[layer].is_parametric() {
        return Err(CliError::Config(format!("--layer {layer} is not a dense/conv layer")));
    }
    let data = if splits.test.is_empty() { &splits.heldout } else { &splits.test };
    let features = layer_features(&net, layer, data.inputs())?;
    let projection = pca(&features, data.labels(), Some(layer))?;
    let path = job.out.join(format!("projection_layer{layer}.csv"));
    write_atomic(&path, projection.to_csv().as_bytes())?;
    Ok(path)
}

pub fn cmd_audit(job: &Job, model: &Path, layer: usize) -> Result<PathBuf, CliError> {
    let net = load_model(model)?;
    let splits = job.config.splits()?;
    check_model(&job.config, &net, &splits.train)?;
    if net.consumer_of(layer).is_none() {
        return Err(CliError::Config(format!("--layer {layer} is not a hidden dense/conv layer")));
    }
    let analysis = analyze(&net, layer, splits.train.inputs(), &job.config.compress.analysis)?;
    let path = job.out.join(format!("audit_layer{layer}.json"));
    write_json(&path, &analysis.to_json())?;
    Ok(path)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    // a second call in the same process is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<String, CliError> {
    configure_threads()?;
    Ok(match &cli.command {
        Command::Train(common) => {
            let m = cmd_train(&Job::new(common)?)?;
            format!("heldout accuracy {:.4}, {} parameters", m.accuracy, m.params.total)
        }
        Command::Compress { common, model } => {
            let r = cmd_compress(&Job::new(common)?, model)?;
            let s = &r.summary;
            format!(
                "params -{:.2}% (dense -{:.2}%, conv -{:.2}%), accuracy drop {:.2} points over {} steps",
                s.delta_total_pct,
                s.delta_dense_pct,
                s.delta_conv_pct,
                s.delta_acc_pct,
                r.steps.len()
            )
        }
        Command::Sweep { common, model, epsilons } => {
            let eps = parse_epsilons(epsilons)?;
            cmd_sweep(&Job::new(common)?, model, &eps)?.trim_end().to_string()
        }
        Command::Eval { common, model } => {
            let m = cmd_eval(&Job::new(common)?, model)?;
            serde_json::to_string(&m).expect("serializable")
        }
        Command::Project { common, model, layer } => {
            let p = cmd_project(&Job::new(common)?, model, *layer)?;
            format!("wrote {}", p.display())
        }
        Command::Audit { common, model, layer } => {
            let p = cmd_audit(&Job::new(common)?, model, *layer)?;
            format!("wrote {}", p.display())
        }
    })
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
