//! Command-line driver for training, unlearning and running experiments.

pub mod results;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use curenewton::checkpoint::{self, Checkpoint, CheckpointError, TrainingMeta};
use curenewton::data::{self, BlobSpec, CsvOptions, DataError};
use curenewton::harness::{self, EvalContext, ErasureConfig, ExperimentConfig, HarnessError, MethodConfig};
use curenewton::model::{self, Activation, Dataset, ModelError, ModelSpec, OptimizerKind, TrainConfig};
use curenewton::unlearn::{Problem, UnlearnError};
use thiserror::Error;

use crate::results::{ResultsFile, RunKind};

/// Error categories double as exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Io(_) => "io",
            Self::Format(_) => "format",
            Self::Numeric(_) => "numeric",
            Self::Config(_) => "config",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Io(_) => 3,
            Self::Format(_) => 4,
            Self::Numeric(_) => 5,
            Self::Config(_) => 6,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let msg = e.to_string();
        match e {
            DataError::Io { .. } => Self::Io(msg),
            DataError::InvalidArgument(_) => Self::Config(msg),
            DataError::Model(m) => m.into(),
            _ => Self::Format(msg),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let msg = e.to_string();
        match e {
            ModelError::Diverged { .. } | ModelError::NonFiniteParams | ModelError::Linalg(_) => Self::Numeric(msg),
            _ => Self::Config(msg),
        }
    }
}

impl From<UnlearnError> for CliError {
    fn from(e: UnlearnError) -> Self {
        let msg = e.to_string();
        match e {
            UnlearnError::Model(m) => m.into(),
            UnlearnError::InvalidConfig(_)
            | UnlearnError::BatchTooLarge { .. }
            | UnlearnError::EmptyRetained
            | UnlearnError::NoRetainedClasses => Self::Config(msg),
            _ => Self::Numeric(msg),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        let msg = e.to_string();
        match e {
            CheckpointError::Io { .. } => Self::Io(msg),
            CheckpointError::Model(m) => m.into(),
            _ => Self::Format(msg),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(m) => Self::Config(format!("invalid experiment config: {m}")),
            HarnessError::Data(e) => e.into(),
            HarnessError::Model(e) => e.into(),
            HarnessError::Unlearn(e) => e.into(),
            HarnessError::Eval(e) => Self::Config(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

#[derive(Debug, Parser)]
#[command(name = "curenewton", version, about = "Second-order machine unlearning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a dataset and save a checkpoint.
    Train(TrainCmd),
    /// Unlearn rows from a checkpoint with one method and report metrics.
    Unlearn(UnlearnCmd),
    /// Run a batch unlearning experiment from a config file.
    Batch(ExperimentCmd),
    /// Run a sequential unlearning experiment from a config file.
    Sequential(ExperimentCmd),
    /// Time every configured method.
    Runtime(RuntimeCmd),
    /// Write a synthetic Gaussian-blob dataset as CSV.
    GenData(GenDataCmd),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["data", "idx_images"])))]
pub struct DataArgs {
    /// CSV dataset; the label column defaults to the last one.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<usize>,
    /// The CSV has no header row.
    #[arg(long)]
    pub no_header: bool,
    /// IDX image file (use with --idx-labels).
    #[arg(long, requires = "idx_labels")]
    pub idx_images: Option<PathBuf>,
    #[arg(long, requires = "idx_images")]
    pub idx_labels: Option<PathBuf>,
    /// Held-out fraction, split stratified by class.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

impl DataArgs {
    fn load(&self) -> Result<(Dataset, Dataset), CliError> {
        let full = match (&self.data, &self.idx_images, &self.idx_labels) {
            (Some(path), _, _) => {
                let text = read_text(path)?;
                let label_column = match self.label_column {
                    Some(c) => c,
                    None => {
                        let first = text.lines().next().ok_or_else(|| CliError::Format("empty csv".into()))?;
                        first.split(',').count().saturating_sub(1)
                    }
                };
                let opts = CsvOptions {
                    label_column,
                    has_header: !self.no_header,
                };
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("csv");
                data::parse_csv(name, &text, &opts)?
            }
            (None, Some(images), Some(labels)) => data::load_idx(images, labels)?,
            _ => return Err(CliError::Usage("give --data or --idx-images with --idx-labels".into())),
        };
        Ok(full.train_test_split(self.test_fraction, self.split_seed)?)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    LogisticRegression,
    LinearRegression,
    Mlp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActivationArg {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
}

impl TrainArgs {
    fn config(&self, seed: u64, epochs: Option<usize>) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            optimizer: match self.optimizer {
                Some(OptimizerArg::Sgd) => OptimizerKind::Sgd,
                Some(OptimizerArg::Adam) => OptimizerKind::AdaptiveMoments,
                None => d.optimizer,
            },
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            epochs: self.epochs.or(epochs).unwrap_or(d.epochs),
            seed,
            ..d
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "logistic-regression")]
    pub model: ModelArg,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
    #[arg(long, value_enum, default_value = "tanh")]
    pub activation: ActivationArg,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint path.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("erasure").required(true).args(["erase_class", "erase_fraction", "erase_indices"])))]
pub struct ErasureArgs {
    #[arg(long)]
    pub erase_class: Option<usize>,
    #[arg(long)]
    pub erase_fraction: Option<f64>,
    /// Comma-separated training-row indices.
    #[arg(long, value_delimiter = ',')]
    pub erase_indices: Option<Vec<usize>>,
}

impl ErasureArgs {
    fn config(&self) -> ErasureConfig {
        if let Some(class) = self.erase_class {
            ErasureConfig::Class { class }
        } else if let Some(fraction) = self.erase_fraction {
            ErasureConfig::Fraction { fraction }
        } else {
            ErasureConfig::Indices {
                indices: self.erase_indices.clone().unwrap_or_default(),
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct UnlearnCmd {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub erasure: ErasureArgs,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(MethodConfig::NAMES))]
    pub method: String,
    /// TOML file with method settings, e.g. `lipschitz_l = 3.0`.
    #[arg(long)]
    pub method_config: Option<PathBuf>,
    /// Settings for the reference retraining; defaults follow the checkpoint.
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Unlearned checkpoint path.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Metrics report path (JSON); printed to stdout otherwise.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentCmd {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Replace the configured seeds; repeatable.
    #[arg(long)]
    pub seed: Vec<u64>,
    /// Keep only these methods; repeatable. Unconfigured names use defaults.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(MethodConfig::NAMES))]
    pub method: Vec<String>,
    #[arg(long, conflicts_with = "erase_fraction")]
    pub erase_class: Option<usize>,
    #[arg(long)]
    pub erase_fraction: Option<f64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Output prefix; `.json` and `.csv` are appended.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RuntimeCmd {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Vec<u64>,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(MethodConfig::NAMES))]
    pub method: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDataCmd {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    #[arg(long, default_value_t = 1.0)]
    pub spread: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

/// Parses an experiment config; relative paths resolve against its directory.
pub fn load_experiment(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = read_text(path)?;
    let mut config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(config)
}

fn select_methods(config: &mut ExperimentConfig, names: &[String]) {
    if names.is_empty() {
        return;
    }
    config.methods = names
        .iter()
        .map(|n| {
            config
                .methods
                .iter()
                .find(|m| m.name() == n)
                .cloned()
                .unwrap_or_else(|| MethodConfig::from_name(n).expect("validated by clap"))
        })
        .collect();
}

fn method_from_file(name: &str, path: Option<&Path>) -> Result<MethodConfig, CliError> {
    let Some(path) = path else {
        return Ok(MethodConfig::from_name(name).expect("validated by clap"));
    };
    let text = read_text(path)?;
    let mut table: toml::Table = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    table.insert("name".into(), toml::Value::String(name.into()));
    table
        .try_into()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn build_spec(cmd: &TrainCmd, train: &Dataset) -> Result<ModelSpec, CliError> {
    let (p, c) = (train.n_features(), train.class_count());
    let spec = match cmd.model {
        ModelArg::LogisticRegression => ModelSpec::logistic_regression(p, c, cmd.l2),
        ModelArg::LinearRegression => ModelSpec::linear_regression(p, cmd.l2),
        ModelArg::Mlp => ModelSpec::mlp(p, cmd.hidden, c, cmd.l2),
    }
    .with_activation(match cmd.activation {
        ActivationArg::Tanh => Activation::Tanh,
        ActivationArg::Relu => Activation::Relu,
    });
    spec.validate()?;
    Ok(spec)
}

fn run_train(cmd: &TrainCmd) -> Result<(), CliError> {
    let (train, _) = cmd.data.load()?;
    let spec = build_spec(cmd, &train)?;
    let tcfg = cmd.train.config(cmd.seed, None);
    let outcome = model::train(&spec, &train, &train.all_indices(), &tcfg)?;
    let meta = TrainingMeta {
        seed: cmd.seed,
        epochs: tcfg.epochs as u32,
        final_loss: outcome.final_loss,
        created_at: now_secs(),
    };
    checkpoint::save_checkpoint(&cmd.output, &Checkpoint::new(spec, outcome.params, meta)?)?;
    println!("trained {} rows, final loss {:.6}, saved {}", train.len(), outcome.final_loss, cmd.output.display());
    Ok(())
}

fn run_unlearn(cmd: &UnlearnCmd) -> Result<(), CliError> {
    let ck = checkpoint::load_checkpoint(&cmd.checkpoint, None)?;
    let (train, test) = cmd.data.load()?;
    let spec = &ck.spec;
    if !spec.is_classifier() {
        return Err(CliError::Config("unlearn reports accuracies and needs a classifier checkpoint".into()));
    }
    spec.check_data(&train)?;
    let erasure = cmd.erasure.config();
    let target = erasure.target(&train, cmd.seed)?;
    let split = model::split(&train, &target)?;
    let tcfg = cmd.train.config(ck.meta.seed, Some(ck.meta.epochs as usize));
    let start = std::time::Instant::now();
    let reference = model::train(spec, &train, split.retained(), &tcfg)?.params;
    let ref_secs = start.elapsed().as_secs_f64();

    let method = method_from_file(&cmd.method, cmd.method_config.as_deref())?;
    let (w, norm, alpha, secs) = match &method {
        MethodConfig::Original => (ck.params.clone(), 0.0, None, 0.0),
        MethodConfig::Retraining => (reference.clone(), reference.distance(&ck.params), None, ref_secs),
        m => {
            let problem = Problem::new(spec, &train, &split, &ck.params)?;
            let r = m.apply(&problem).expect("handled above")?;
            let alpha = r.alpha_trace.last().copied();
            (r.w_unlearned, r.update_norm, alpha, r.wall_time_seconds)
        }
    };
    let mia_test = harness::mia_test_rows(&erasure, &test);
    let ctx = EvalContext {
        spec,
        train: &train,
        test: &test,
        split: &split,
        reference: &reference,
        mia_test: &mia_test,
        mia_folds: curenewton::eval::DEFAULT_MIA_FOLDS,
        seed: cmd.seed,
        round: 0,
    };
    let report = ctx.report(method.name(), &w, norm, alpha, secs)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match &cmd.report {
        Some(path) => write_text(path, &json)?,
        None => print!("{json}"),
    }
    if let Some(out) = &cmd.output {
        let meta = TrainingMeta {
            final_loss: spec.loss(&w, &train, split.retained())?,
            created_at: now_secs(),
            ..ck.meta
        };
        checkpoint::save_checkpoint(out, &Checkpoint::new(spec.clone(), w, meta)?)?;
    }
    Ok(())
}

fn experiment_config(cmd: &ExperimentCmd) -> Result<ExperimentConfig, CliError> {
    let mut config = load_experiment(&cmd.config)?;
    if !cmd.seed.is_empty() {
        config.seeds = cmd.seed.clone();
    }
    select_methods(&mut config, &cmd.method);
    if let Some(class) = cmd.erase_class {
        config.erasure = ErasureConfig::Class { class };
    }
    if let Some(fraction) = cmd.erase_fraction {
        config.erasure = ErasureConfig::Fraction { fraction };
    }
    if let Some(r) = cmd.rounds {
        config.rounds = r;
    }
    Ok(config)
}

fn output_prefix(cli: Option<&PathBuf>, config: &ExperimentConfig) -> Option<PathBuf> {
    let p = cli.or(config.output_path.as_ref())?;
    Some(match p.extension().and_then(|e| e.to_str()) {
        Some("json" | "csv") => p.with_extension(""),
        _ => p.clone(),
    })
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn run_experiment(cmd: &ExperimentCmd, kind: RunKind) -> Result<(), CliError> {
    let config = experiment_config(cmd)?;
    let outcome = match kind {
        RunKind::Batch => harness::run_batch(&config)?,
        RunKind::Sequential => harness::run_sequential(&config)?,
    };
    for f in outcome.failures() {
        eprintln!("method {} failed (seed {}, round {}): {}", f.method, f.seed, f.round, f.error);
    }
    let prefix = output_prefix(cmd.output.as_ref(), &config);
    let file = ResultsFile::new(kind, config, outcome);
    let csv = results::aggregates_to_csv(&file.aggregates);
    print!("{csv}");
    if let Some(prefix) = prefix {
        write_text(&with_ext(&prefix, "json"), &file.to_json())?;
        write_text(&with_ext(&prefix, "csv"), &csv)?;
    }
    Ok(())
}

fn run_runtime(cmd: &RuntimeCmd) -> Result<(), CliError> {
    let mut config = load_experiment(&cmd.config)?;
    if !cmd.seed.is_empty() {
        config.seeds = cmd.seed.clone();
    }
    select_methods(&mut config, &cmd.method);
    let rows = harness::measure_runtime(&config, cmd.repeats)?;
    print!("{}", results::runtime_table(&rows));
    if let Some(prefix) = output_prefix(cmd.output.as_ref(), &config) {
        let json = serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n";
        write_text(&with_ext(&prefix, "json"), &json)?;
        write_text(&with_ext(&prefix, "csv"), &results::runtime_to_csv(&rows))?;
    }
    Ok(())
}

fn run_gen_data(cmd: &GenDataCmd) -> Result<(), CliError> {
    let data = data::gen_blobs(&BlobSpec {
        classes: cmd.classes,
        per_class: cmd.per_class,
        dims: cmd.dims,
        spread: cmd.spread,
        seed: cmd.seed,
    })?;
    if let Some(dir) = cmd.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    data::write_csv(&cmd.output, &data)?;
    println!("wrote {} rows to {}", data.len(), cmd.output.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(c) => run_train(c),
        Command::Unlearn(c) => run_unlearn(c),
        Command::Batch(c) => run_experiment(c, RunKind::Batch),
        Command::Sequential(c) => run_experiment(c, RunKind::Sequential),
        Command::Runtime(c) => run_runtime(c),
        Command::GenData(c) => run_gen_data(c),
    }
}
