use std::collections::BTreeSet;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Problem, UnlearnError, UnlearnResult};
use crate::model::{self, OptimizerKind, TrainConfig};
use crate::seed;

/// Plain minibatch SGD settings for GD, GA and the random-label fine-tune.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FirstOrderConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FirstOrderConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            learning_rate: 0.01,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl FirstOrderConfig {
    pub(crate) fn as_train_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: OptimizerKind::Sgd,
            learning_rate: self.learning_rate,
            lr_decay_rate: 1.0,
            lr_decay_every_steps: usize::MAX,
            weight_decay: 0.0,
            batch_size: self.batch_size,
            epochs: 1,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    fn validate(&self) -> Result<(), UnlearnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(UnlearnError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(UnlearnError::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomLabelsConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for RandomLabelsConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            learning_rate: 0.01,
            batch_size: 64,
            seed: 0,
        }
    }
}

fn descend(
    problem: &Problem<'_>,
    subset: &[usize],
    data: &crate::model::Dataset,
    config: &FirstOrderConfig,
    direction: f64,
) -> Result<Vec<f64>, UnlearnError> {
    config.validate()?;
    if config.steps == 0 {
        return Ok(problem.w_star.as_slice().to_vec());
    }
    let out = model::train::run_minibatch(
        problem.spec,
        problem.w_star,
        data,
        subset,
        &config.as_train_config(),
        config.steps,
        direction,
    )?;
    Ok(out.params.into_vec())
}

/// Minibatch gradient descent on the retained loss.
pub fn gd_unlearn(problem: &Problem<'_>, config: &FirstOrderConfig) -> Result<UnlearnResult, UnlearnError> {
    let start = Instant::now();
    let w = descend(problem, problem.split.retained(), problem.data, config, 1.0)?;
    UnlearnResult::new("gd", problem.w_star, w, Vec::new(), start)
}

/// Minibatch gradient ascent on the erased loss.
pub fn ga_unlearn(problem: &Problem<'_>, config: &FirstOrderConfig) -> Result<UnlearnResult, UnlearnError> {
    let start = Instant::now();
    if problem.split.n_erased() == 0 {
        return UnlearnResult::new("ga", problem.w_star, problem.w_star.as_slice().to_vec(), Vec::new(), start);
    }
    let w = descend(problem, problem.split.erased(), problem.data, config, -1.0)?;
    UnlearnResult::new("ga", problem.w_star, w, Vec::new(), start)
}

/// New labels for the erased rows, uniform over the classes still present in
/// the retained set.
pub fn random_relabeling(problem: &Problem<'_>, seed: u64) -> Result<Vec<(usize, usize)>, UnlearnError> {
    let labels = problem
        .data
        .labels()
        .ok_or(UnlearnError::Model(model::ModelError::WrongTargetKind("random labels need class labels")))?;
    let retained: Vec<usize> = problem
        .split
        .retained()
        .iter()
        .map(|&i| labels[i])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if retained.is_empty() {
        return Err(UnlearnError::NoRetainedClasses);
    }
    let mut rng = seed::rng(seed::derive(seed, "random-labels"));
    Ok(problem
        .split
        .erased()
        .iter()
        .map(|&i| (i, retained[rng.random_range(0..retained.len())]))
        .collect())
}

/// Fine-tunes on the erased rows after giving them random retained-class labels.
pub fn random_labels_unlearn(problem: &Problem<'_>, config: &RandomLabelsConfig) -> Result<UnlearnResult, UnlearnError> {
    let start = Instant::now();
    let relabel = random_relabeling(problem, config.seed)?;
    if relabel.is_empty() {
        return UnlearnResult::new("random-labels", problem.w_star, problem.w_star.as_slice().to_vec(), Vec::new(), start);
    }
    let data = problem.data.with_relabeled(&relabel)?;
    let erased = problem.split.erased();
    let fo = FirstOrderConfig {
        steps: config.epochs * erased.len().div_ceil(config.batch_size.max(1)),
        learning_rate: config.learning_rate,
        batch_size: config.batch_size,
        seed: config.seed,
    };
    let w = descend(problem, erased, &data, &fo, 1.0)?;
    UnlearnResult::new("random-labels", problem.w_star, w, Vec::new(), start)
}

/// Exact unlearning: trains from scratch on the retained rows.
pub fn retrain_unlearn(problem: &Problem<'_>, config: &TrainConfig) -> Result<UnlearnResult, UnlearnError> {
    let start = Instant::now();
    if problem.split.n_retained() == 0 {
        return Err(UnlearnError::EmptyRetained);
    }
    let out = model::train(problem.spec, problem.data, problem.split.retained(), config)?;
    UnlearnResult::new("retraining", problem.w_star, out.params.into_vec(), Vec::new(), start)
}
