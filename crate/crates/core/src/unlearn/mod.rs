//! Unlearning updates.
//!
//! Every method starts from trained parameters `w*` and a split of the
//! training data, and returns new parameters that should behave like a model
//! trained on the retained rows only.
//!
//! | method | update |
//! |---|---|
//! | Newton | `w* − H⁻¹g` |
//! | PINV-Newton | `w* − H⁺g` |
//! | Damped-Newton | `w* − (H + γI)⁻¹g` |
//! | CureNewton | `w* + s`, `s` minimizing the cubic-regularized model |
//! | SCureNewton | repeated stochastic cubic steps using HVPs only |
//! | GD / GA | SGD on the retained loss / ascent on the erased loss |
//! | Random labels | fine-tune on the erased rows with random labels |
//! | Retraining | train from scratch on the retained rows |
//!
//! `g` and `H` are the gradient and Hessian of the retained loss at `w*`.

mod first_order;
mod stochastic;
mod trust_region;

pub use first_order::{
    ga_unlearn, gd_unlearn, random_labels_unlearn, random_relabeling, retrain_unlearn, FirstOrderConfig,
    RandomLabelsConfig,
};
pub use stochastic::{descent_cubic_solve, scure_newton_unlearn, SCureNewtonConfig};
pub use trust_region::{cubic_model, duality_gap, trust_region_solve, TrustRegionCase, TrustRegionSolution};

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cholesky, damped_apply, pinv_apply, solve_spd, sym_eigendecompose, vec_ops, LinalgError};
use crate::model::{Dataset, DatasetSplit, ModelError, ModelSpec, ParamVector, DEFAULT_HESSIAN_CAP};
use crate::seed;

pub const DEFAULT_DAMPING: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnlearnError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dual iteration did not converge after {iterations} iterations (best residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("batch of {batch} exceeds the {available} retained samples")]
    BatchTooLarge { batch: usize, available: usize },
    #[error("retained set is empty")]
    EmptyRetained,
    #[error("no classes remain in the retained set")]
    NoRetainedClasses,
}

/// Everything an unlearning method needs to know about the trained model.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub spec: &'a ModelSpec,
    pub data: &'a Dataset,
    pub split: &'a DatasetSplit,
    pub w_star: &'a ParamVector,
    pub hessian_cap: usize,
}

impl<'a> Problem<'a> {
    pub fn new(
        spec: &'a ModelSpec,
        data: &'a Dataset,
        split: &'a DatasetSplit,
        w_star: &'a ParamVector,
    ) -> Result<Self, UnlearnError> {
        spec.validate()?;
        spec.check_data(data)?;
        if split.n() != data.len() {
            return Err(UnlearnError::InvalidConfig(format!(
                "split covers {} rows, dataset has {}",
                split.n(),
                data.len()
            )));
        }
        if w_star.len() != spec.param_count() {
            return Err(ModelError::ParamLength {
                expected: spec.param_count(),
                found: w_star.len(),
            }
            .into());
        }
        Ok(Self {
            spec,
            data,
            split,
            w_star,
            hessian_cap: DEFAULT_HESSIAN_CAP,
        })
    }

    pub fn with_hessian_cap(mut self, cap: usize) -> Self {
        self.hessian_cap = cap;
        self
    }

    fn retained(&self) -> Result<&'a [usize], UnlearnError> {
        let r = self.split.retained();
        if r.is_empty() {
            Err(UnlearnError::EmptyRetained)
        } else {
            Ok(r)
        }
    }

    /// Gradient of the retained loss at `w*`.
    pub fn retained_grad(&self) -> Result<Vec<f64>, UnlearnError> {
        Ok(self.spec.grad(self.w_star, self.data, self.retained()?)?.into_vec())
    }

    /// Dense Hessian of the retained loss at `w*`.
    pub fn retained_hessian(&self) -> Result<crate::linalg::SymmetricMatrix, UnlearnError> {
        Ok(self
            .spec
            .hessian_with_cap(self.w_star, self.data, self.retained()?, self.hessian_cap)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlearnResult {
    pub method: String,
    pub w_unlearned: ParamVector,
    /// `‖w_unlearned − w*‖₂`.
    pub update_norm: f64,
    /// Converged dual variable per request; empty for methods without one.
    pub alpha_trace: Vec<f64>,
    pub wall_time_seconds: f64,
    pub trust_region: Option<TrustRegionSolution>,
}

impl UnlearnResult {
    pub(crate) fn new(
        method: &str,
        w_star: &ParamVector,
        w: Vec<f64>,
        alpha_trace: Vec<f64>,
        start: Instant,
    ) -> Result<Self, UnlearnError> {
        if !vec_ops::all_finite(&w) {
            return Err(UnlearnError::NonFinite("unlearned parameters"));
        }
        let w_unlearned = w_star.with_values(w)?;
        Ok(Self {
            method: method.to_string(),
            update_norm: w_unlearned.distance(w_star),
            w_unlearned,
            alpha_trace,
            wall_time_seconds: start.elapsed().as_secs_f64(),
            trust_region: None,
        })
    }
}

/// One Newton step on the retained loss. Fails when `H` is not positive definite.
pub fn newton_unlearn(problem: &Problem<'_>) -> Result<UnlearnResult, UnlearnError> {
    let start = Instant::now();
    let g = problem.retained_grad()?;
    let h = problem.retained_hessian()?;
    let step = solve_spd(&cholesky(&h)?, &g)?;
    let w = vec_ops::sub(problem.w_star.as_slice(), &step);
    UnlearnResult::new("newton", problem.w_star, w, Vec::new(), start)
}

/// Newton step through the pseudoinverse of `H`.
pub fn pinv_newton_unlearn(problem: &Problem<'_>, rank_tol: f64) -> Result<UnlearnResult, UnlearnError> {
    let start = Instant::now();
    let g = problem.retained_grad()?;
    let h = problem.retained_hessian()?;
    let step = pinv_apply(&sym_eigendecompose(&h)?, &g, rank_tol)?;
    let w = vec_ops::sub(problem.w_star.as_slice(), &step);
    UnlearnResult::new("pinv-newton", problem.w_star, w, Vec::new(), start)
}

/// Newton step with `γI` added to the Hessian.
pub fn damped_newton_unlearn(problem: &Problem<'_>, gamma: f64) -> Result<UnlearnResult, UnlearnError> {
    let start = Instant::now();
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(UnlearnError::InvalidConfig(format!("damping must be non-negative, got {gamma}")));
    }
    let g = problem.retained_grad()?;
    let h = problem.retained_hessian()?;
    let step = damped_apply(&h, &g, gamma)?;
    let w = vec_ops::sub(problem.w_star.as_slice(), &step);
    UnlearnResult::new("damped-newton", problem.w_star, w, Vec::new(), start)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CureNewtonConfig {
    pub lipschitz_l: f64,
    pub tol_eps: f64,
    pub max_newton_iters: usize,
}

impl Default for CureNewtonConfig {
    fn default() -> Self {
        Self {
            lipschitz_l: 5.0,
            tol_eps: 1e-6,
            max_newton_iters: 100,
        }
    }
}

/// Cubic-regularized Newton step: `w* − (H + αLI)⁻¹g` at the dual optimum `α`.
pub fn cure_newton_unlearn(problem: &Problem<'_>, config: &CureNewtonConfig) -> Result<UnlearnResult, UnlearnError> {
    let start = Instant::now();
    let g = problem.retained_grad()?;
    let h = problem.retained_hessian()?;
    let sol = trust_region_solve(&h, &g, config.lipschitz_l, config.tol_eps, config.max_newton_iters)?;
    let w = vec_ops::add(problem.w_star.as_slice(), &sol.delta);
    let mut out = UnlearnResult::new("cure-newton", problem.w_star, w, vec![sol.alpha], start)?;
    out.trust_region = Some(sol);
    Ok(out)
}

/// Empirical Hessian-Lipschitz bound for the loss on `subset`.
///
/// Samples `pairs` point pairs in the ball of radius `radius` around `center`
/// and returns twice the largest `‖H(w₁) − H(w₂)‖_F / (2‖w₁ − w₂‖)`. Half of
/// the pairs are close together to catch local curvature changes.
pub fn estimate_hessian_lipschitz(
    spec: &ModelSpec,
    data: &Dataset,
    subset: &[usize],
    center: &ParamVector,
    radius: f64,
    pairs: usize,
    seed: u64,
) -> Result<f64, UnlearnError> {
    if !(radius > 0.0) || pairs == 0 {
        return Err(UnlearnError::InvalidConfig("radius and pairs must be positive".into()));
    }
    let d = center.len();
    let mut rng = seed::rng(seed::derive(seed, "lipschitz"));
    let ball_point = |rng: &mut rand_chacha::ChaCha8Rng, base: &[f64], r: f64| {
        let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = vec_ops::norm(&dir);
        let scale = r * rng.random::<f64>().powf(1.0 / d as f64) / n;
        let mut p = base.to_vec();
        vec_ops::axpy(scale, &dir, &mut p);
        p
    };
    let mut best: f64 = 0.0;
    for k in 0..pairs {
        let w1 = ball_point(&mut rng, center.as_slice(), radius);
        let r2 = if k % 2 == 0 { radius } else { 0.05 * radius };
        let w2 = ball_point(&mut rng, &w1, r2);
        let dist = vec_ops::distance(&w1, &w2);
        if dist == 0.0 {
            continue;
        }
        let h1 = spec.hessian(&center.with_values(w1)?, data, subset)?;
        let h2 = spec.hessian(&center.with_values(w2)?, data, subset)?;
        let diff = crate::linalg::SymmetricMatrix::linear_combination(1.0, &h1, -1.0, &h2)?;
        best = best.max(diff.frobenius_norm() / (2.0 * dist));
    }
    Ok(2.0 * best)
}

/// Cubic upper model of the loss around `w*`:
/// `L(w*) + gᵀΔ + ½ΔᵀHΔ + (L/3)‖Δ‖³` with `Δ = w − w*`.
pub fn cubic_surrogate(
    loss_at_center: f64,
    g: &[f64],
    h: &crate::linalg::SymmetricMatrix,
    lipschitz: f64,
    delta: &[f64],
) -> Result<f64, UnlearnError> {
    Ok(loss_at_center + cubic_model(h, g, lipschitz, delta)?)
}
