//! Batch and sequential unlearning experiments.
//!
//! One experiment run per seed:
//!
//! 1. train the original model `w*` on the full training set,
//! 2. choose the erasure target and cut it into `rounds` disjoint chunks,
//! 3. per round, retrain a reference model on the cumulative retained rows,
//!    apply every configured method and evaluate it against the reference.
//!
//! In sequential runs each method continues from its own previous output.
//! A method that fails is recorded and dropped from later rounds; the other
//! methods are unaffected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, BlobSpec, CsvOptions, DataError};
use crate::eval::{self, EvalError, MetricsReport, DEFAULT_MIA_FOLDS};
use crate::linalg::DEFAULT_RANK_TOL;
use crate::model::{
    self, Activation, Dataset, DatasetSplit, ModelError, ModelKind, ModelSpec, ParamVector, TrainConfig,
    DEFAULT_HESSIAN_CAP,
};
use crate::seed;
use crate::unlearn::{
    self, CureNewtonConfig, FirstOrderConfig, Problem, RandomLabelsConfig, SCureNewtonConfig, UnlearnError,
    UnlearnResult, DEFAULT_DAMPING,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Unlearn(#[from] UnlearnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_train_cap() -> usize {
    2000
}

fn default_test_cap() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Blobs {
        #[serde(default = "BlobsDefaults::classes")]
        classes: usize,
        #[serde(default = "BlobsDefaults::per_class")]
        per_class: usize,
        #[serde(default = "BlobsDefaults::dims")]
        dims: usize,
        #[serde(default = "BlobsDefaults::spread")]
        spread: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    /// IDX image/label pairs. Without test files the training file is split.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        #[serde(default = "default_train_cap")]
        train_cap: usize,
        #[serde(default = "default_test_cap")]
        test_cap: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    Csv {
        path: PathBuf,
        /// Zero-based label column.
        label_column: usize,
        #[serde(default = "yes")]
        has_header: bool,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

fn yes() -> bool {
    true
}

struct BlobsDefaults;

impl BlobsDefaults {
    fn classes() -> usize {
        BlobSpec::default().classes
    }
    fn per_class() -> usize {
        BlobSpec::default().per_class
    }
    fn dims() -> usize {
        BlobSpec::default().dims
    }
    fn spread() -> f64 {
        BlobSpec::default().spread
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let b = BlobSpec::default();
        Self::Blobs {
            classes: b.classes,
            per_class: b.per_class,
            dims: b.dims,
            spread: b.spread,
            seed: b.seed,
            test_fraction: default_test_fraction(),
        }
    }
}

impl DatasetConfig {
    /// Loads the data and returns `(train, test)`.
    pub fn load(&self) -> Result<(Dataset, Dataset), HarnessError> {
        match self {
            Self::Blobs {
                classes,
                per_class,
                dims,
                spread,
                seed,
                test_fraction,
            } => {
                let all = data::gen_blobs(&BlobSpec {
                    classes: *classes,
                    per_class: *per_class,
                    dims: *dims,
                    spread: *spread,
                    seed: *seed,
                })?;
                Ok(all.train_test_split(*test_fraction, *seed)?)
            }
            Self::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                train_cap,
                test_cap,
                seed,
                test_fraction,
            } => {
                let full = data::load_idx(train_images, train_labels)?;
                let (train, test) = match (test_images, test_labels) {
                    (Some(ti), Some(tl)) => (full, data::load_idx(ti, tl)?),
                    (None, None) => full.train_test_split(*test_fraction, *seed)?,
                    _ => {
                        return Err(HarnessError::Config(
                            "test_images and test_labels must be given together".into(),
                        ))
                    }
                };
                Ok((
                    data::subsample(&train, *train_cap, seed::derive(*seed, "train"))?,
                    data::subsample(&test, *test_cap, seed::derive(*seed, "test"))?,
                ))
            }
            Self::Csv {
                path,
                label_column,
                has_header,
                seed,
                test_fraction,
            } => {
                let opts = CsvOptions {
                    label_column: *label_column,
                    has_header: *has_header,
                };
                let all = data::load_csv(path, &opts)?;
                Ok(all.train_test_split(*test_fraction, *seed)?)
            }
        }
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Self::Blobs { .. } => Vec::new(),
            Self::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                let mut v = vec![train_images, train_labels];
                v.extend(test_images.as_mut());
                v.extend(test_labels.as_mut());
                v
            }
            Self::Csv { path, .. } => vec![path],
        }
    }
}

/// Model family; input and output sizes come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default)]
    pub hidden_units: usize,
    #[serde(default)]
    pub l2_coeff: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Mlp,
            hidden_units: 16,
            l2_coeff: 1e-3,
            activation: Activation::Tanh,
        }
    }
}

impl ModelConfig {
    pub fn build(&self, data: &Dataset) -> Result<ModelSpec, HarnessError> {
        let p = data.n_features();
        let c = data.class_count();
        let spec = match self.kind {
            ModelKind::LinearRegression => ModelSpec::linear_regression(p, self.l2_coeff),
            ModelKind::LogisticRegression => ModelSpec::logistic_regression(p, c, self.l2_coeff),
            ModelKind::Mlp => ModelSpec::mlp(p, self.hidden_units, c, self.l2_coeff),
        }
        .with_activation(self.activation);
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ErasureConfig {
    /// Every training row of one class.
    Class { class: usize },
    /// A uniformly random fraction of the training rows.
    Fraction { fraction: f64 },
    /// Explicit training-row indices.
    Indices { indices: Vec<usize> },
}

impl Default for ErasureConfig {
    fn default() -> Self {
        Self::Fraction { fraction: 0.1 }
    }
}

impl ErasureConfig {
    /// Sorted erasure target for one seed.
    pub fn target(&self, train: &Dataset, seed: u64) -> Result<Vec<usize>, HarnessError> {
        let split = match self {
            Self::Class { class } => model::split_class(train, *class)?,
            Self::Fraction { fraction } => model::split_fraction(train, *fraction, seed::derive(seed, "erasure"))?,
            Self::Indices { indices } => model::split(train, indices)?,
        };
        Ok(split.erased().to_vec())
    }
}

fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}

fn default_damping() -> f64 {
    DEFAULT_DAMPING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum MethodConfig {
    /// The trained model, untouched.
    Original,
    /// The shared reference model retrained on the retained rows.
    Retraining,
    Newton,
    PinvNewton {
        #[serde(default = "default_rank_tol")]
        rank_tol: f64,
    },
    DampedNewton {
        #[serde(default = "default_damping")]
        gamma: f64,
    },
    CureNewton(CureNewtonConfig),
    ScureNewton(SCureNewtonConfig),
    Gd(FirstOrderConfig),
    Ga(FirstOrderConfig),
    RandomLabels(RandomLabelsConfig),
}

impl MethodConfig {
    pub const NAMES: [&'static str; 10] = [
        "original",
        "retraining",
        "newton",
        "pinv-newton",
        "damped-newton",
        "cure-newton",
        "scure-newton",
        "gd",
        "ga",
        "random-labels",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Original => "original",
            Self::Retraining => "retraining",
            Self::Newton => "newton",
            Self::PinvNewton { .. } => "pinv-newton",
            Self::DampedNewton { .. } => "damped-newton",
            Self::CureNewton(_) => "cure-newton",
            Self::ScureNewton(_) => "scure-newton",
            Self::Gd(_) => "gd",
            Self::Ga(_) => "ga",
            Self::RandomLabels(_) => "random-labels",
        }
    }

    /// Default configuration for a registered method name.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "original" => Self::Original,
            "retraining" => Self::Retraining,
            "newton" => Self::Newton,
            "pinv-newton" => Self::PinvNewton {
                rank_tol: DEFAULT_RANK_TOL,
            },
            "damped-newton" => Self::DampedNewton { gamma: DEFAULT_DAMPING },
            "cure-newton" => Self::CureNewton(CureNewtonConfig::default()),
            "scure-newton" => Self::ScureNewton(SCureNewtonConfig::default()),
            "gd" => Self::Gd(FirstOrderConfig::default()),
            "ga" => Self::Ga(FirstOrderConfig::default()),
            "random-labels" => Self::RandomLabels(RandomLabelsConfig::default()),
            _ => return None,
        })
    }

    fn seeded(&self, run_seed: u64, round: usize) -> Self {
        let tag = format!("method/{}/{round}", self.name());
        let mix = |own: u64| seed::derive(run_seed.wrapping_add(own), &tag);
        let mut out = self.clone();
        match &mut out {
            Self::ScureNewton(c) => c.seed = mix(c.seed),
            Self::Gd(c) | Self::Ga(c) => c.seed = mix(c.seed),
            Self::RandomLabels(c) => c.seed = mix(c.seed),
            _ => {}
        }
        out
    }

    /// Applies the method. `Original` and `Retraining` are handled by the
    /// harness and return `None`.
    pub fn apply(&self, problem: &Problem<'_>) -> Option<Result<UnlearnResult, UnlearnError>> {
        Some(match self {
            Self::Original | Self::Retraining => return None,
            Self::Newton => unlearn::newton_unlearn(problem),
            Self::PinvNewton { rank_tol } => unlearn::pinv_newton_unlearn(problem, *rank_tol),
            Self::DampedNewton { gamma } => unlearn::damped_newton_unlearn(problem, *gamma),
            Self::CureNewton(c) => unlearn::cure_newton_unlearn(problem, c),
            Self::ScureNewton(c) => unlearn::scure_newton_unlearn(problem, c),
            Self::Gd(c) => unlearn::gd_unlearn(problem, c),
            Self::Ga(c) => unlearn::ga_unlearn(problem, c),
            Self::RandomLabels(c) => unlearn::random_labels_unlearn(problem, c),
        })
    }
}

fn default_seeds() -> Vec<u64> {
    vec![5, 1, 2]
}

fn default_rounds() -> usize {
    1
}

fn default_mia_folds() -> usize {
    DEFAULT_MIA_FOLDS
}

fn default_hessian_cap() -> usize {
    DEFAULT_HESSIAN_CAP
}

fn default_methods() -> Vec<MethodConfig> {
    ["original", "retraining", "newton", "cure-newton"]
        .iter()
        .filter_map(|n| MethodConfig::from_name(n))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub erasure: ErasureConfig,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodConfig>,
    /// Sequential runs cut the erasure target into this many chunks.
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_mia_folds")]
    pub mia_folds: usize,
    #[serde(default = "default_hessian_cap")]
    pub hessian_cap: usize,
    /// Where the CLI writes results when no `--output` is given.
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            erasure: ErasureConfig::default(),
            methods: default_methods(),
            rounds: default_rounds(),
            seeds: default_seeds(),
            mia_folds: default_mia_folds(),
            hessian_cap: default_hessian_cap(),
            output_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.rounds == 0 {
            return bad("rounds must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if let ErasureConfig::Fraction { fraction } = self.erasure {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return bad(format!("erase fraction {fraction} outside (0, 1]"));
            }
        }
        if self.model.kind == ModelKind::LinearRegression {
            return bad("experiments report accuracies and need a classifier".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.methods {
            if !seen.insert(m.name()) {
                return bad(format!("method {} listed twice", m.name()));
            }
        }
        self.train.validate()?;
        Ok(())
    }

    /// Makes relative dataset and output paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let mut paths = self.dataset.paths_mut();
        paths.extend(self.output_path.as_mut());
        for p in paths {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFailure {
    pub method: String,
    pub seed: u64,
    pub round: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub seed: u64,
    pub round: usize,
    pub erased_this_round: usize,
    pub cumulative_erased: usize,
    pub reports: Vec<MetricsReport>,
    pub failures: Vec<MethodFailure>,
}

impl RoundLog {
    /// `(method, α)` for every method that reports a dual variable.
    pub fn alphas(&self) -> Vec<(String, f64)> {
        self.reports
            .iter()
            .filter_map(|r| r.alpha.map(|a| (r.method.clone(), a)))
            .collect()
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            count: xs.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub round: usize,
    pub runs: usize,
    pub acc_erased: Stat,
    pub acc_retained: Stat,
    pub acc_test: Stat,
    pub js_div: Stat,
    pub update_norm: Stat,
    pub mia_acc: Option<Stat>,
    pub alpha: Option<Stat>,
    pub wall_time_seconds: Stat,
}

/// Groups reports by method and round, in first-seen order.
pub fn aggregate(reports: &[MetricsReport]) -> Vec<Aggregate> {
    let mut order: Vec<(String, usize)> = Vec::new();
    let mut groups: BTreeMap<(String, usize), Vec<&MetricsReport>> = BTreeMap::new();
    for r in reports {
        let key = (r.method.clone(), r.round);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let col = |f: &dyn Fn(&MetricsReport) -> f64| Stat::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let opt = |f: &dyn Fn(&MetricsReport) -> Option<f64>| Stat::of(&rs.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            Aggregate {
                method: key.0,
                round: key.1,
                runs: rs.len(),
                acc_erased: col(&|r| r.acc_erased).expect("non-empty group"),
                acc_retained: col(&|r| r.acc_retained).expect("non-empty group"),
                acc_test: col(&|r| r.acc_test).expect("non-empty group"),
                js_div: col(&|r| r.js_div).expect("non-empty group"),
                update_norm: col(&|r| r.update_norm).expect("non-empty group"),
                mia_acc: opt(&|r| r.mia_acc),
                alpha: opt(&|r| r.alpha),
                wall_time_seconds: col(&|r| r.wall_time_seconds).expect("non-empty group"),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub rounds: Vec<RoundLog>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentOutcome {
    fn from_rounds(rounds: Vec<RoundLog>) -> Self {
        let aggregates = aggregate(&rounds.iter().flat_map(|r| r.reports.iter().cloned()).collect::<Vec<_>>());
        Self { rounds, aggregates }
    }

    pub fn reports(&self) -> impl Iterator<Item = &MetricsReport> {
        self.rounds.iter().flat_map(|r| &r.reports)
    }

    pub fn failures(&self) -> impl Iterator<Item = &MethodFailure> {
        self.rounds.iter().flat_map(|r| &r.failures)
    }
}

/// Training data, model and original parameters for one seed.
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub spec: ModelSpec,
    pub w_star: ParamVector,
    pub target: Vec<usize>,
}

fn train_config(config: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed: seed.wrapping_add(config.train.seed),
        ..config.train.clone()
    }
}

pub fn prepare(config: &ExperimentConfig, seed: u64) -> Result<Prepared, HarnessError> {
    let (train, test) = config.dataset.load()?;
    let spec = config.model.build(&train)?;
    let w_star = model::train(&spec, &train, &train.all_indices(), &train_config(config, seed))?.params;
    let target = config.erasure.target(&train, seed)?;
    Ok(Prepared {
        train,
        test,
        spec,
        w_star,
        target,
    })
}

/// Splits `target` into `rounds` disjoint chunks of near-equal size.
pub fn erasure_chunks(target: &[usize], rounds: usize, seed: u64) -> Result<Vec<Vec<usize>>, HarnessError> {
    if rounds == 0 || rounds > target.len() {
        return Err(HarnessError::Config(format!(
            "cannot cut {} erased rows into {rounds} rounds",
            target.len()
        )));
    }
    let mut order = target.to_vec();
    if rounds > 1 {
        order.shuffle(&mut seed::rng(seed::derive(seed, "sequential-chunks")));
    }
    let base = order.len() / rounds;
    let extra = order.len() % rounds;
    let mut chunks = Vec::with_capacity(rounds);
    let mut at = 0;
    for r in 0..rounds {
        let len = base + usize::from(r < extra);
        let mut c = order[at..at + len].to_vec();
        c.sort_unstable();
        chunks.push(c);
        at += len;
    }
    Ok(chunks)
}

/// Everything needed to score one unlearned model against a reference.
pub struct EvalContext<'a> {
    pub spec: &'a ModelSpec,
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub split: &'a DatasetSplit,
    pub reference: &'a ParamVector,
    /// Test rows used as MIA non-members.
    pub mia_test: &'a [usize],
    pub mia_folds: usize,
    pub seed: u64,
    pub round: usize,
}

impl EvalContext<'_> {
    /// Scores `w`. MIA is left empty when either side has too few rows.
    pub fn report(
        &self,
        method: &str,
        w: &ParamVector,
        update_norm: f64,
        alpha: Option<f64>,
        wall_time_seconds: f64,
    ) -> Result<MetricsReport, HarnessError> {
        let erased = self.split.erased();
        let mia_acc = eval::mia_accuracy(
            self.spec,
            w,
            (self.train, erased),
            (self.test, self.mia_test),
            self.mia_folds,
            seed::derive(self.seed, &format!("mia/{}", self.round)),
        )
        .ok();
        Ok(MetricsReport {
            method: method.to_string(),
            seed: self.seed,
            round: self.round,
            acc_erased: eval::accuracy(self.spec, w, self.train, erased)?,
            acc_retained: eval::accuracy(self.spec, w, self.train, self.split.retained())?,
            acc_test: eval::accuracy(self.spec, w, self.test, &self.test.all_indices())?,
            js_div: eval::js_divergence(self.spec, w, self.reference, self.train, erased)?,
            update_norm,
            mia_acc,
            alpha,
            wall_time_seconds,
        })
    }
}

/// Test rows used as MIA non-members: the erased classes only under class erasure.
pub fn mia_test_rows(erasure: &ErasureConfig, test: &Dataset) -> Vec<usize> {
    match *erasure {
        ErasureConfig::Class { class } => test.indices_of_class(class),
        _ => test.all_indices(),
    }
}

fn run_seed(config: &ExperimentConfig, seed: u64, rounds: usize) -> Result<Vec<RoundLog>, HarnessError> {
    let prep = prepare(config, seed)?;
    let chunks = erasure_chunks(&prep.target, rounds, seed)?;
    let mia_test = mia_test_rows(&config.erasure, &prep.test);
    let tcfg = train_config(config, seed);

    let mut states: Vec<Option<ParamVector>> = vec![Some(prep.w_star.clone()); config.methods.len()];
    let mut cumulative: Vec<usize> = Vec::new();
    let mut logs = Vec::with_capacity(rounds);
    for (round, chunk) in chunks.iter().enumerate() {
        cumulative.extend_from_slice(chunk);
        let split = model::split(&prep.train, &cumulative)?;
        if split.n_retained() == 0 {
            return Err(HarnessError::Config("erasure leaves no retained rows".into()));
        }
        let start = Instant::now();
        let reference = model::train(&prep.spec, &prep.train, split.retained(), &tcfg)?.params;
        let ref_secs = start.elapsed().as_secs_f64();
        let ev = EvalContext {
            spec: &prep.spec,
            train: &prep.train,
            test: &prep.test,
            split: &split,
            reference: &reference,
            mia_test: &mia_test,
            mia_folds: config.mia_folds,
            seed,
            round,
        };

        let mut reports = Vec::new();
        let mut failures = Vec::new();
        for (method, state) in config.methods.iter().zip(states.iter_mut()) {
            let Some(w_prev) = state.as_ref() else { continue };
            let name = method.name();
            let outcome = match method {
                MethodConfig::Original => Ok((w_prev.clone(), 0.0, None, 0.0)),
                MethodConfig::Retraining => Ok((reference.clone(), reference.distance(w_prev), None, ref_secs)),
                m => {
                    let problem = Problem::new(&prep.spec, &prep.train, &split, w_prev)?.with_hessian_cap(config.hessian_cap);
                    m.seeded(seed, round)
                        .apply(&problem)
                        .expect("handled above")
                        .map(|r| (r.w_unlearned, r.update_norm, r.alpha_trace.last().copied(), r.wall_time_seconds))
                }
            };
            match outcome {
                Ok((w, norm, alpha, secs)) => {
                    reports.push(ev.report(name, &w, norm, alpha, secs)?);
                    *state = Some(w);
                }
                Err(e) => {
                    failures.push(MethodFailure {
                        method: name.to_string(),
                        seed,
                        round,
                        error: e.to_string(),
                    });
                    *state = None;
                }
            }
        }
        logs.push(RoundLog {
            seed,
            round,
            erased_this_round: chunk.len(),
            cumulative_erased: cumulative.len(),
            reports,
            failures,
        });
    }
    Ok(logs)
}

/// Erases the whole target in one request per seed.
pub fn run_batch(config: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    config.validate()?;
    let mut rounds = Vec::new();
    for &seed in &config.seeds {
        rounds.extend(run_seed(config, seed, 1)?);
    }
    Ok(ExperimentOutcome::from_rounds(rounds))
}

/// Erases the target over `config.rounds` successive requests per seed.
pub fn run_sequential(config: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    config.validate()?;
    let mut rounds = Vec::new();
    for &seed in &config.seeds {
        rounds.extend(run_seed(config, seed, config.rounds)?);
    }
    Ok(ExperimentOutcome::from_rounds(rounds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub method: String,
    /// Absent when every call failed.
    pub seconds: Option<Stat>,
    pub failures: usize,
}

/// Wall-clock seconds per unlearning call, `repeats` calls per seed.
///
/// Original training is excluded. Reference retraining always gets its own row.
pub fn measure_runtime(config: &ExperimentConfig, repeats: usize) -> Result<Vec<RuntimeRow>, HarnessError> {
    config.validate()?;
    if repeats == 0 {
        return Err(HarnessError::Config("repeats must be at least 1".into()));
    }
    let mut methods: Vec<MethodConfig> = vec![MethodConfig::Retraining];
    methods.extend(
        config
            .methods
            .iter()
            .filter(|m| !matches!(m, MethodConfig::Original | MethodConfig::Retraining))
            .cloned(),
    );
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
    let mut failures = vec![0usize; methods.len()];
    for &seed in &config.seeds {
        let prep = prepare(config, seed)?;
        let split = model::split(&prep.train, &prep.target)?;
        let tcfg = train_config(config, seed);
        let problem = Problem::new(&prep.spec, &prep.train, &split, &prep.w_star)?.with_hessian_cap(config.hessian_cap);
        for (k, m) in methods.iter().enumerate() {
            for _ in 0..repeats {
                let start = Instant::now();
                let ok = match m {
                    MethodConfig::Retraining => model::train(&prep.spec, &prep.train, split.retained(), &tcfg).is_ok(),
                    m => m.seeded(seed, 0).apply(&problem).expect("handled above").is_ok(),
                };
                let secs = start.elapsed().as_secs_f64();
                if ok {
                    samples[k].push(secs);
                } else {
                    failures[k] += 1;
                }
            }
        }
    }
    Ok(methods
        .iter()
        .zip(samples)
        .zip(failures)
        .map(|((m, s), failures)| RuntimeRow {
            method: m.name().to_string(),
            seconds: Stat::of(&s),
            failures,
        })
        .collect())
}
