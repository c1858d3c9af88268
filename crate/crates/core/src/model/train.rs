use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, ModelError, ModelKind, ModelSpec, ParamVector};
use crate::linalg::vec_ops;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    #[serde(alias = "adam")]
    AdaptiveMoments,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// Multiplier applied every `lr_decay_every_steps` optimizer steps.
    pub lr_decay_rate: f64,
    pub lr_decay_every_steps: usize,
    /// Added to the gradient as `weight_decay · w`, on top of the model's own L2 term.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::AdaptiveMoments,
            learning_rate: 0.01,
            lr_decay_rate: 0.5,
            lr_decay_every_steps: 5000,
            weight_decay: 0.005,
            batch_size: 64,
            epochs: 15,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidTrainConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        self.validate_common()
    }

    fn validate_common(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidTrainConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.lr_decay_every_steps == 0 {
            return bad("lr_decay_every_steps must be at least 1");
        }
        if !(self.lr_decay_rate > 0.0 && self.lr_decay_rate.is_finite()) {
            return bad("lr_decay_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }

    fn rate_at(&self, step: usize) -> f64 {
        self.learning_rate * self.lr_decay_rate.powi((step / self.lr_decay_every_steps) as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ParamVector,
    /// Full-subset objective after the last step.
    pub final_loss: f64,
    pub grad_norm: f64,
    pub steps: usize,
}

/// Initial parameters: zeros for convex models, `U(±1/√fan_in)` for the MLP.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParamVector, ModelError> {
    spec.validate()?;
    if spec.kind != ModelKind::Mlp {
        return Ok(spec.zero_params());
    }
    let mut rng = seed::rng(seed::derive(seed, "init"));
    let layout = spec.layout();
    let mut values = vec![0.0; spec.param_count()];
    for block in &layout.blocks {
        let fan_in = if block.name.starts_with("hidden") {
            spec.input_dim
        } else {
            spec.hidden_units
        };
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in &mut values[block.offset..block.offset + block.len()] {
            *v = rng.random_range(-bound..bound);
        }
    }
    spec.params(values)
}

/// Trains from a seeded initialization on `subset`.
pub fn train(spec: &ModelSpec, data: &Dataset, subset: &[usize], config: &TrainConfig) -> Result<TrainOutcome, ModelError> {
    let w0 = init_params(spec, config.seed)?;
    train_from(spec, &w0, data, subset, config)
}

/// Continues training from `w0`.
pub fn train_from(
    spec: &ModelSpec,
    w0: &ParamVector,
    data: &Dataset,
    subset: &[usize],
    config: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    let per_epoch = subset.len().div_ceil(config.batch_size);
    run_minibatch(spec, w0, data, subset, config, config.epochs * per_epoch, 1.0)
}

/// Minibatch driver shared by training and the first-order baselines.
///
/// Runs `steps` optimizer steps, reshuffling `subset` at each epoch boundary.
/// `direction` is `1.0` to descend and `-1.0` to ascend.
pub(crate) fn run_minibatch(
    spec: &ModelSpec,
    w0: &ParamVector,
    data: &Dataset,
    subset: &[usize],
    config: &TrainConfig,
    steps: usize,
    direction: f64,
) -> Result<TrainOutcome, ModelError> {
    config.validate_common()?;
    spec.check(w0, data, subset)?;
    let d = w0.len();
    let mut w = w0.as_slice().to_vec();
    let mut m = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut order = subset.to_vec();
    let mut rng = seed::rng(seed::derive(config.seed, "minibatch"));
    let mut cursor = order.len();
    let (mut b1t, mut b2t) = (1.0, 1.0);

    for step in 0..steps {
        if cursor >= order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(order.len());
        let batch = &order[cursor..end];
        cursor = end;

        let (loss, mut g) = spec.loss_and_grad_raw(&w, data, batch);
        if !loss.is_finite() || !vec_ops::all_finite(&g) {
            return Err(ModelError::Diverged { step, loss });
        }
        if config.weight_decay > 0.0 {
            vec_ops::axpy(config.weight_decay, &w, &mut g);
        }
        let lr = direction * config.rate_at(step);
        match config.optimizer {
            OptimizerKind::Sgd => vec_ops::axpy(-lr, &g, &mut w),
            OptimizerKind::AdaptiveMoments => {
                b1t *= config.beta1;
                b2t *= config.beta2;
                for i in 0..d {
                    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
                    let mh = m[i] / (1.0 - b1t);
                    let vh = v[i] / (1.0 - b2t);
                    w[i] -= lr * mh / (vh.sqrt() + config.adam_eps);
                }
            }
        }
        if !vec_ops::all_finite(&w) {
            return Err(ModelError::Diverged { step, loss: f64::NAN });
        }
    }

    let (final_loss, g) = spec.loss_and_grad_raw(&w, data, subset);
    if !final_loss.is_finite() {
        return Err(ModelError::Diverged {
            step: steps,
            loss: final_loss,
        });
    }
    Ok(TrainOutcome {
        params: w0.with_values(w)?,
        final_loss,
        grad_norm: vec_ops::norm(&g),
        steps,
    })
}
