//! Datasets, splits and the differentiable models unlearning operates on.
//!
//! Three model families are supported, all with an L2 regularizer
//! `(λ/2)‖w‖²` folded into the objective:
//!
//! - ridge linear regression (squared error `½(ŷ − y)²`),
//! - multinomial logistic regression,
//! - a one-hidden-layer MLP with softmax output.
//!
//! Convex models get exact analytic Hessians and Hessian-vector products. The
//! MLP computes Hessian-vector products by central differences of its analytic
//! gradient, and assembles the dense Hessian column by column from those.

mod dataset;
pub(crate) mod train;

pub use dataset::{split, split_class, split_fraction, Dataset, DatasetSplit, Targets};
pub use train::{init_params, train, train_from, OptimizerKind, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{vec_ops, LinalgError, SymmetricMatrix};

/// Largest parameter count for which a dense Hessian is built by default.
pub const DEFAULT_HESSIAN_CAP: usize = 4096;

/// Default finite-difference scale for MLP Hessian-vector products.
pub const DEFAULT_HVP_EPS: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("empty subset")]
    EmptySubset,
    #[error("index {index} out of range for length {len}")]
    InvalidIndex { index: usize, len: usize },
    #[error("duplicate index {0}")]
    DuplicateIndex(usize),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("wrong target kind: {0}")]
    WrongTargetKind(&'static str),
    #[error("parameter vector has length {found}, model expects {expected}")]
    ParamLength { expected: usize, found: usize },
    #[error("non-finite parameter value")]
    NonFiniteParams,
    #[error("dense Hessian of dimension {dim} exceeds cap {cap}; use a Hessian-free method")]
    HessianTooLarge { dim: usize, cap: usize },
    #[error("activation {0:?} is not twice differentiable; second-order paths need tanh")]
    NotTwiceDifferentiable(Activation),
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearRegression,
    LogisticRegression,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

/// Model family plus the shape and regularization it is built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// Output classes; 1 for regression.
    pub class_count: usize,
    /// Hidden width, MLP only.
    #[serde(default)]
    pub hidden_units: usize,
    /// Coefficient of the `(λ/2)‖w‖²` regularizer.
    #[serde(default)]
    pub l2_coeff: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelSpec {
    pub fn linear_regression(input_dim: usize, l2_coeff: f64) -> Self {
        Self {
            kind: ModelKind::LinearRegression,
            input_dim,
            class_count: 1,
            hidden_units: 0,
            l2_coeff,
            activation: Activation::Tanh,
        }
    }

    pub fn logistic_regression(input_dim: usize, class_count: usize, l2_coeff: f64) -> Self {
        Self {
            kind: ModelKind::LogisticRegression,
            input_dim,
            class_count,
            hidden_units: 0,
            l2_coeff,
            activation: Activation::Tanh,
        }
    }

    pub fn mlp(input_dim: usize, hidden_units: usize, class_count: usize, l2_coeff: f64) -> Self {
        Self {
            kind: ModelKind::Mlp,
            input_dim,
            class_count,
            hidden_units,
            l2_coeff,
            activation: Activation::Tanh,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidSpec(m));
        if self.input_dim == 0 {
            return bad("input_dim must be positive".into());
        }
        if !(self.l2_coeff >= 0.0 && self.l2_coeff.is_finite()) {
            return bad(format!("l2_coeff must be finite and non-negative, got {}", self.l2_coeff));
        }
        match self.kind {
            ModelKind::LinearRegression if self.class_count != 1 => {
                bad("linear regression has a single output (class_count = 1)".into())
            }
            ModelKind::LogisticRegression | ModelKind::Mlp if self.class_count < 2 => {
                bad("classification needs class_count >= 2".into())
            }
            ModelKind::Mlp if self.hidden_units == 0 => bad("mlp needs hidden_units >= 1".into()),
            _ => Ok(()),
        }
    }

    pub fn is_classifier(&self) -> bool {
        self.kind != ModelKind::LinearRegression
    }

    pub fn param_count(&self) -> usize {
        let p = self.input_dim;
        match self.kind {
            ModelKind::LinearRegression => p + 1,
            ModelKind::LogisticRegression => self.class_count * (p + 1),
            ModelKind::Mlp => {
                let h = self.hidden_units;
                h * p + h + self.class_count * h + self.class_count
            }
        }
    }

    pub fn layout(&self) -> ParamLayout {
        let p = self.input_dim;
        let c = self.class_count;
        let blocks = match self.kind {
            ModelKind::LinearRegression => vec![
                ParamBlock::new("weight", 0, 1, p),
                ParamBlock::new("bias", p, 1, 1),
            ],
            ModelKind::LogisticRegression => vec![
                ParamBlock::new("weight", 0, c, p),
                ParamBlock::new("bias", c * p, 1, c),
            ],
            ModelKind::Mlp => {
                let h = self.hidden_units;
                vec![
                    ParamBlock::new("hidden.weight", 0, h, p),
                    ParamBlock::new("hidden.bias", h * p, 1, h),
                    ParamBlock::new("output.weight", h * p + h, c, h),
                    ParamBlock::new("output.bias", h * p + h + c * h, 1, c),
                ]
            }
        };
        ParamLayout { blocks }
    }

    pub fn params(&self, values: Vec<f64>) -> Result<ParamVector, ModelError> {
        ParamVector::new(self, values)
    }

    pub fn zero_params(&self) -> ParamVector {
        ParamVector {
            values: vec![0.0; self.param_count()],
            layout: self.layout(),
        }
    }

    fn check(&self, w: &ParamVector, data: &Dataset, subset: &[usize]) -> Result<(), ModelError> {
        self.validate()?;
        self.check_params(w.as_slice())?;
        self.check_data(data)?;
        if subset.is_empty() {
            return Err(ModelError::EmptySubset);
        }
        dataset::check_indices(subset, data.len())
    }

    fn check_params(&self, w: &[f64]) -> Result<(), ModelError> {
        if w.len() != self.param_count() {
            return Err(ModelError::ParamLength {
                expected: self.param_count(),
                found: w.len(),
            });
        }
        if !vec_ops::all_finite(w) {
            return Err(ModelError::NonFiniteParams);
        }
        Ok(())
    }

    pub fn check_data(&self, data: &Dataset) -> Result<(), ModelError> {
        if data.n_features() != self.input_dim {
            return Err(ModelError::InvalidDataset(format!(
                "dataset has {} features, model expects {}",
                data.n_features(),
                self.input_dim
            )));
        }
        match (self.is_classifier(), data.targets()) {
            (true, Targets::Classes { class_count, .. }) if *class_count > self.class_count => {
                Err(ModelError::InvalidDataset(format!(
                    "dataset has {class_count} classes, model has {}",
                    self.class_count
                )))
            }
            (true, Targets::Real(_)) => Err(ModelError::WrongTargetKind("classifier needs class labels")),
            (false, Targets::Classes { .. }) => {
                Err(ModelError::WrongTargetKind("regression needs real-valued targets"))
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn require_smooth(&self) -> Result<(), ModelError> {
        if self.kind == ModelKind::Mlp && self.activation == Activation::Relu {
            Err(ModelError::NotTwiceDifferentiable(self.activation))
        } else {
            Ok(())
        }
    }
}

/// A named contiguous block of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: &'static str,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamBlock {
    fn new(name: &'static str, offset: usize, rows: usize, cols: usize) -> Self {
        Self { name, offset, rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub blocks: Vec<ParamBlock>,
}

impl ParamLayout {
    pub fn total(&self) -> usize {
        self.blocks.iter().map(ParamBlock::len).sum()
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// Flat model parameters together with their block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: ParamLayout,
}

impl ParamVector {
    pub fn new(spec: &ModelSpec, values: Vec<f64>) -> Result<Self, ModelError> {
        spec.check_params(&values)?;
        Ok(Self {
            values,
            layout: spec.layout(),
        })
    }

    /// Same layout, new values. Used for steps and gradients.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != self.values.len() {
            return Err(ModelError::ParamLength {
                expected: self.values.len(),
                found: values.len(),
            });
        }
        if !vec_ops::all_finite(&values) {
            return Err(ModelError::NonFiniteParams);
        }
        Ok(Self {
            values,
            layout: self.layout.clone(),
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .block(name)
            .map(|b| &self.values[b.offset..b.offset + b.len()])
    }

    pub fn norm(&self) -> f64 {
        vec_ops::norm(&self.values)
    }

    pub fn distance(&self, other: &ParamVector) -> f64 {
        vec_ops::distance(&self.values, &other.values)
    }
}

/// Row-major `n × C` matrix of predictive distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Probabilities {
    classes: usize,
    data: Vec<f64>,
}

impl Probabilities {
    pub fn rows(&self) -> usize {
        self.data.len() / self.classes
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    /// Argmax per row, ties going to the lowest class index.
    pub fn predicted_labels(&self) -> Vec<usize> {
        (0..self.rows()).map(|i| argmax(self.row(i))).collect()
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = k;
        }
    }
    best
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Per-sample data term plus optional accumulated gradient.
struct Evaluation {
    loss_sum: f64,
    grad_sum: Option<Vec<f64>>,
}

impl ModelSpec {
    fn label(data: &Dataset, i: usize) -> usize {
        data.labels().map(|l| l[i]).unwrap_or(0)
    }

    fn target(data: &Dataset, i: usize) -> f64 {
        match data.targets() {
            Targets::Real(t) => t[i],
            Targets::Classes { .. } => 0.0,
        }
    }

    /// Output logits (or the regression prediction) for one row.
    fn forward(&self, w: &[f64], x: &[f64], hidden: &mut Vec<f64>) -> Vec<f64> {
        let p = self.input_dim;
        let c = self.class_count;
        match self.kind {
            ModelKind::LinearRegression => vec![vec_ops::dot(&w[..p], x) + w[p]],
            ModelKind::LogisticRegression => (0..c)
                .map(|k| vec_ops::dot(&w[k * p..(k + 1) * p], x) + w[c * p + k])
                .collect(),
            ModelKind::Mlp => {
                let h = self.hidden_units;
                let (w1, rest) = w.split_at(h * p);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                hidden.clear();
                hidden.extend((0..h).map(|j| {
                    let a = vec_ops::dot(&w1[j * p..(j + 1) * p], x) + b1[j];
                    self.activate(a)
                }));
                (0..c)
                    .map(|k| vec_ops::dot(&w2[k * h..(k + 1) * h], hidden) + b2[k])
                    .collect()
            }
        }
    }

    fn activate(&self, a: f64) -> f64 {
        match self.activation {
            Activation::Tanh => a.tanh(),
            Activation::Relu => a.max(0.0),
        }
    }

    // Derivative expressed through the activation output.
    fn activation_slope(&self, out: f64) -> f64 {
        match self.activation {
            Activation::Tanh => 1.0 - out * out,
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn sample_loss(&self, out: &[f64], data: &Dataset, i: usize) -> f64 {
        match self.kind {
            ModelKind::LinearRegression => 0.5 * (out[0] - Self::target(data, i)).powi(2),
            _ => log_sum_exp(out) - out[Self::label(data, i)],
        }
    }

    fn evaluate(&self, w: &[f64], data: &Dataset, subset: &[usize], want_grad: bool) -> Evaluation {
        let p = self.input_dim;
        let c = self.class_count;
        let mut grad = want_grad.then(|| vec![0.0; w.len()]);
        let mut loss_sum = 0.0;
        let mut hidden = Vec::new();
        let mut delta_hidden = vec![0.0; self.hidden_units];
        for &i in subset {
            let x = data.row(i);
            let out = self.forward(w, x, &mut hidden);
            loss_sum += self.sample_loss(&out, data, i);
            let Some(g) = grad.as_mut() else { continue };
            match self.kind {
                ModelKind::LinearRegression => {
                    let r = out[0] - Self::target(data, i);
                    vec_ops::axpy(r, x, &mut g[..p]);
                    g[p] += r;
                }
                ModelKind::LogisticRegression => {
                    let mut prob = out;
                    softmax_in_place(&mut prob);
                    prob[Self::label(data, i)] -= 1.0;
                    for k in 0..c {
                        vec_ops::axpy(prob[k], x, &mut g[k * p..(k + 1) * p]);
                        g[c * p + k] += prob[k];
                    }
                }
                ModelKind::Mlp => {
                    let h = self.hidden_units;
                    let mut prob = out;
                    softmax_in_place(&mut prob);
                    prob[Self::label(data, i)] -= 1.0;
                    let w2 = &w[h * p + h..h * p + h + c * h];
                    delta_hidden.iter_mut().for_each(|v| *v = 0.0);
                    let (g1, g_rest) = g.split_at_mut(h * p);
                    let (gb1, g_rest) = g_rest.split_at_mut(h);
                    let (g2, gb2) = g_rest.split_at_mut(c * h);
                    for k in 0..c {
                        let dz = prob[k];
                        vec_ops::axpy(dz, &hidden, &mut g2[k * h..(k + 1) * h]);
                        gb2[k] += dz;
                        vec_ops::axpy(dz, &w2[k * h..(k + 1) * h], &mut delta_hidden);
                    }
                    for j in 0..h {
                        let da = delta_hidden[j] * self.activation_slope(hidden[j]);
                        vec_ops::axpy(da, x, &mut g1[j * p..(j + 1) * p]);
                        gb1[j] += da;
                    }
                }
            }
        }
        Evaluation {
            loss_sum,
            grad_sum: grad,
        }
    }

    fn regularizer(&self, w: &[f64]) -> f64 {
        0.5 * self.l2_coeff * vec_ops::dot(w, w)
    }

    pub(crate) fn loss_and_grad_raw(&self, w: &[f64], data: &Dataset, subset: &[usize]) -> (f64, Vec<f64>) {
        let n = subset.len() as f64;
        let ev = self.evaluate(w, data, subset, true);
        let mut g = ev.grad_sum.expect("gradient requested");
        for (gi, wi) in g.iter_mut().zip(w) {
            *gi = *gi / n + self.l2_coeff * wi;
        }
        (ev.loss_sum / n + self.regularizer(w), g)
    }

    pub(crate) fn grad_raw(&self, w: &[f64], data: &Dataset, subset: &[usize]) -> Vec<f64> {
        self.loss_and_grad_raw(w, data, subset).1
    }

    /// Mean per-sample loss over `subset` plus `(λ/2)‖w‖²`.
    pub fn loss(&self, w: &ParamVector, data: &Dataset, subset: &[usize]) -> Result<f64, ModelError> {
        self.check(w, data, subset)?;
        let ev = self.evaluate(w.as_slice(), data, subset, false);
        Ok(ev.loss_sum / subset.len() as f64 + self.regularizer(w.as_slice()))
    }

    /// Unregularized loss of each listed sample, in subset order.
    pub fn per_sample_losses(
        &self,
        w: &ParamVector,
        data: &Dataset,
        subset: &[usize],
    ) -> Result<Vec<f64>, ModelError> {
        self.check(w, data, subset)?;
        let mut hidden = Vec::new();
        Ok(subset
            .iter()
            .map(|&i| {
                let out = self.forward(w.as_slice(), data.row(i), &mut hidden);
                self.sample_loss(&out, data, i)
            })
            .collect())
    }

    pub fn grad(&self, w: &ParamVector, data: &Dataset, subset: &[usize]) -> Result<ParamVector, ModelError> {
        self.check(w, data, subset)?;
        w.with_values(self.grad_raw(w.as_slice(), data, subset))
    }

    pub fn loss_and_grad(
        &self,
        w: &ParamVector,
        data: &Dataset,
        subset: &[usize],
    ) -> Result<(f64, ParamVector), ModelError> {
        self.check(w, data, subset)?;
        let (l, g) = self.loss_and_grad_raw(w.as_slice(), data, subset);
        Ok((l, w.with_values(g)?))
    }

    /// Dense Hessian with the default size cap.
    pub fn hessian(&self, w: &ParamVector, data: &Dataset, subset: &[usize]) -> Result<SymmetricMatrix, ModelError> {
        self.hessian_with_cap(w, data, subset, DEFAULT_HESSIAN_CAP)
    }

    pub fn hessian_with_cap(
        &self,
        w: &ParamVector,
        data: &Dataset,
        subset: &[usize],
        cap: usize,
    ) -> Result<SymmetricMatrix, ModelError> {
        self.check(w, data, subset)?;
        self.require_smooth()?;
        let d = self.param_count();
        if d > cap {
            return Err(ModelError::HessianTooLarge { dim: d, cap });
        }
        let raw = match self.kind {
            ModelKind::LinearRegression | ModelKind::LogisticRegression => {
                self.analytic_hessian(w.as_slice(), data, subset)
            }
            ModelKind::Mlp => self.hessian_from_hvp(w.as_slice(), data, subset),
        };
        Ok(SymmetricMatrix::from_row_major(d, raw)?)
    }

    fn analytic_hessian(&self, w: &[f64], data: &Dataset, subset: &[usize]) -> Vec<f64> {
        let p = self.input_dim;
        let d = self.param_count();
        let mut hess = vec![0.0; d * d];
        let mut xt = vec![0.0; p + 1];
        let mut hidden = Vec::new();
        match self.kind {
            ModelKind::LinearRegression => {
                for &i in subset {
                    xt[..p].copy_from_slice(data.row(i));
                    xt[p] = 1.0;
                    for a in 0..d {
                        vec_ops::axpy(xt[a], &xt, &mut hess[a * d..(a + 1) * d]);
                    }
                }
            }
            ModelKind::LogisticRegression => {
                let c = self.class_count;
                // Parameter index of (class k, feature j); j == p is the bias.
                let idx = |k: usize, j: usize| if j < p { k * p + j } else { c * p + k };
                for &i in subset {
                    xt[..p].copy_from_slice(data.row(i));
                    xt[p] = 1.0;
                    let mut prob = self.forward(w, data.row(i), &mut hidden);
                    softmax_in_place(&mut prob);
                    for k in 0..c {
                        for l in 0..c {
                            let a = if k == l { prob[k] - prob[k] * prob[l] } else { -prob[k] * prob[l] };
                            if a == 0.0 {
                                continue;
                            }
                            for a_j in 0..=p {
                                let row = idx(k, a_j) * d;
                                let s = a * xt[a_j];
                                for b_j in 0..=p {
                                    hess[row + idx(l, b_j)] += s * xt[b_j];
                                }
                            }
                        }
                    }
                }
            }
            ModelKind::Mlp => unreachable!("mlp Hessian is assembled from products"),
        }
        let n = subset.len() as f64;
        for (k, h) in hess.iter_mut().enumerate() {
            *h /= n;
            if k % (d + 1) == 0 {
                *h += self.l2_coeff;
            }
        }
        hess
    }

    fn hessian_from_hvp(&self, w: &[f64], data: &Dataset, subset: &[usize]) -> Vec<f64> {
        let d = self.param_count();
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(d);
        let chunk = d.div_ceil(threads);
        let mut cols = vec![Vec::new(); d];
        std::thread::scope(|scope| {
            for (t, slot) in cols.chunks_mut(chunk).enumerate() {
                scope.spawn(move || {
                    let mut e = vec![0.0; d];
                    for (off, col) in slot.iter_mut().enumerate() {
                        let j = t * chunk + off;
                        e[j] = 1.0;
                        *col = self.fd_hvp(w, data, subset, &e, DEFAULT_HVP_EPS);
                        e[j] = 0.0;
                    }
                });
            }
        });
        // Column j of H is H e_j; lay out row-major (symmetrized later).
        let mut hess = vec![0.0; d * d];
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                hess[i * d + j] = *v;
            }
        }
        hess
    }

    fn fd_hvp(&self, w: &[f64], data: &Dataset, subset: &[usize], v: &[f64], eps: f64) -> Vec<f64> {
        let h = eps / vec_ops::norm(v).max(1.0);
        let plus: Vec<f64> = w.iter().zip(v).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = w.iter().zip(v).map(|(a, b)| a - h * b).collect();
        let gp = self.grad_raw(&plus, data, subset);
        let gm = self.grad_raw(&minus, data, subset);
        gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    }

    fn analytic_hvp(&self, w: &[f64], data: &Dataset, subset: &[usize], v: &[f64]) -> Vec<f64> {
        let p = self.input_dim;
        let mut out = vec![0.0; v.len()];
        let mut hidden = Vec::new();
        match self.kind {
            ModelKind::LinearRegression => {
                for &i in subset {
                    let x = data.row(i);
                    let s = vec_ops::dot(&v[..p], x) + v[p];
                    vec_ops::axpy(s, x, &mut out[..p]);
                    out[p] += s;
                }
            }
            ModelKind::LogisticRegression => {
                let c = self.class_count;
                for &i in subset {
                    let x = data.row(i);
                    let mut prob = self.forward(w, x, &mut hidden);
                    softmax_in_place(&mut prob);
                    let u: Vec<f64> = (0..c)
                        .map(|k| vec_ops::dot(&v[k * p..(k + 1) * p], x) + v[c * p + k])
                        .collect();
                    let pu = vec_ops::dot(&prob, &u);
                    for k in 0..c {
                        let r = prob[k] * (u[k] - pu);
                        vec_ops::axpy(r, x, &mut out[k * p..(k + 1) * p]);
                        out[c * p + k] += r;
                    }
                }
            }
            ModelKind::Mlp => unreachable!("mlp products use finite differences"),
        }
        let n = subset.len() as f64;
        for (o, vi) in out.iter_mut().zip(v) {
            *o = *o / n + self.l2_coeff * vi;
        }
        out
    }

    pub(crate) fn hvp_raw(&self, w: &[f64], data: &Dataset, subset: &[usize], v: &[f64]) -> Vec<f64> {
        match self.kind {
            ModelKind::Mlp => self.fd_hvp(w, data, subset, v, DEFAULT_HVP_EPS),
            _ => self.analytic_hvp(w, data, subset, v),
        }
    }

    /// Hessian-vector product `∇²L(w) v`.
    ///
    /// Exact for the convex models; central differences of the analytic
    /// gradient with step `1e-5 / max(1, ‖v‖)` for the MLP.
    pub fn hvp(
        &self,
        w: &ParamVector,
        data: &Dataset,
        subset: &[usize],
        v: &ParamVector,
    ) -> Result<ParamVector, ModelError> {
        self.check(w, data, subset)?;
        self.require_smooth()?;
        if v.is_empty() {
            return Err(ModelError::ParamLength {
                expected: self.param_count(),
                found: 0,
            });
        }
        self.check_params(v.as_slice())?;
        w.with_values(self.hvp_raw(w.as_slice(), data, subset, v.as_slice()))
    }

    /// Finite-difference product, available for every model kind.
    pub fn hvp_finite_difference(
        &self,
        w: &ParamVector,
        data: &Dataset,
        subset: &[usize],
        v: &ParamVector,
        eps: f64,
    ) -> Result<ParamVector, ModelError> {
        self.check(w, data, subset)?;
        self.check_params(v.as_slice())?;
        w.with_values(self.fd_hvp(w.as_slice(), data, subset, v.as_slice(), eps))
    }

    /// Softmax outputs for each listed row.
    pub fn predict_proba(
        &self,
        w: &ParamVector,
        data: &Dataset,
        subset: &[usize],
    ) -> Result<Probabilities, ModelError> {
        if !self.is_classifier() {
            return Err(ModelError::WrongTargetKind("probabilities need a classifier"));
        }
        self.check(w, data, subset)?;
        let mut hidden = Vec::new();
        let mut out = Vec::with_capacity(subset.len() * self.class_count);
        for &i in subset {
            let mut z = self.forward(w.as_slice(), data.row(i), &mut hidden);
            softmax_in_place(&mut z);
            out.extend_from_slice(&z);
        }
        Ok(Probabilities {
            classes: self.class_count,
            data: out,
        })
    }

    /// Regression predictions for each listed row.
    pub fn predict_values(&self, w: &ParamVector, data: &Dataset, subset: &[usize]) -> Result<Vec<f64>, ModelError> {
        if self.is_classifier() {
            return Err(ModelError::WrongTargetKind("values need a regression model"));
        }
        self.check(w, data, subset)?;
        let mut hidden = Vec::new();
        Ok(subset
            .iter()
            .map(|&i| self.forward(w.as_slice(), data.row(i), &mut hidden)[0])
            .collect())
    }
}
