use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Problem, UnlearnError, UnlearnResult};
use crate::linalg::vec_ops;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SCureNewtonConfig {
    pub lipschitz_m: f64,
    pub sigma: f64,
    pub eta: f64,
    pub k_outer: usize,
    pub k_inner: usize,
    pub grad_batch: usize,
    pub hess_batch: usize,
    pub seed: u64,
}

impl Default for SCureNewtonConfig {
    fn default() -> Self {
        Self {
            lipschitz_m: 1.0,
            sigma: 1e-3,
            eta: 0.01,
            k_outer: 20,
            k_inner: 5,
            grad_batch: 128,
            hess_batch: 64,
            seed: 0,
        }
    }
}

impl SCureNewtonConfig {
    pub fn validate(&self) -> Result<(), UnlearnError> {
        let bad = |m: &str| Err(UnlearnError::InvalidConfig(m.to_string()));
        if !(self.lipschitz_m > 0.0 && self.lipschitz_m.is_finite()) {
            return bad("lipschitz_m must be positive");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be non-negative");
        }
        if self.grad_batch == 0 || self.hess_batch == 0 {
            return bad("batch sizes must be positive");
        }
        Ok(())
    }
}

/// Approximate minimizer of `gᵀΔ + ½ΔᵀHΔ + (M/3)‖Δ‖³` by gradient steps.
///
/// `hvp` returns `H v`. The start is the Cauchy point along `−g`; the inner
/// loop then descends with a gradient perturbed by `σξ`, `ξ` uniform on the
/// unit sphere.
pub fn descent_cubic_solve<F>(
    mut hvp: F,
    g: &[f64],
    lipschitz_m: f64,
    sigma: f64,
    eta: f64,
    k_inner: usize,
    seed: u64,
) -> Result<Vec<f64>, UnlearnError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, UnlearnError>,
{
    let d = g.len();
    let g_norm = vec_ops::norm(g);
    if g_norm <= 1e-12 {
        return Ok(vec![0.0; d]);
    }
    let hg = hvp(g)?;
    let beta = vec_ops::dot(g, &hg) / (lipschitz_m * g_norm * g_norm);
    let r_c = -beta + (beta * beta + 2.0 * g_norm / lipschitz_m).sqrt();
    let mut delta = vec_ops::scale(g, -r_c / g_norm);

    let mut rng = seed::rng(seed);
    let mut xi: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let xi_norm = vec_ops::norm(&xi);
    xi.iter_mut().for_each(|x| *x /= xi_norm);
    let mut g_pert = g.to_vec();
    vec_ops::axpy(sigma, &xi, &mut g_pert);

    for _ in 0..k_inner {
        let hd = hvp(&delta)?;
        let dn = vec_ops::norm(&delta);
        for i in 0..d {
            delta[i] -= eta * (hd[i] + g_pert[i] + lipschitz_m * dn * delta[i]);
        }
    }
    if !vec_ops::all_finite(&delta) {
        return Err(UnlearnError::NonFinite("descent cubic solver"));
    }
    Ok(delta)
}

/// Stochastic cubic-regularized Newton on `L_{D_r}` using only gradients and
/// Hessian-vector products.
pub fn scure_newton_unlearn(problem: &Problem<'_>, config: &SCureNewtonConfig) -> Result<UnlearnResult, UnlearnError> {
    let start = std::time::Instant::now();
    config.validate()?;
    let retained = problem.split.retained();
    let n_r = retained.len();
    if n_r == 0 {
        return Err(UnlearnError::EmptyRetained);
    }
    for batch in [config.grad_batch, config.hess_batch] {
        if batch > n_r {
            return Err(UnlearnError::BatchTooLarge { batch, available: n_r });
        }
    }
    let spec = problem.spec;
    spec.require_smooth()?;
    let mut w = problem.w_star.as_slice().to_vec();
    let mut rng = seed::rng(seed::derive(config.seed, "scure-batches"));
    for t in 0..config.k_outer {
        let b1: Vec<usize> = sample(&mut rng, n_r, config.grad_batch).iter().map(|k| retained[k]).collect();
        let b2: Vec<usize> = sample(&mut rng, n_r, config.hess_batch).iter().map(|k| retained[k]).collect();
        let g = spec.grad_raw(&w, problem.data, &b1);
        let w_t = w.clone();
        let hvp = |v: &[f64]| Ok(spec.hvp_raw(&w_t, problem.data, &b2, v));
        let inner_seed = seed::derive(config.seed, &format!("scure-inner-{t}"));
        let step = descent_cubic_solve(hvp, &g, config.lipschitz_m, config.sigma, config.eta, config.k_inner, inner_seed)?;
        vec_ops::axpy(1.0, &step, &mut w);
        if !vec_ops::all_finite(&w) {
            return Err(UnlearnError::NonFinite("scure-newton iterate"));
        }
    }
    UnlearnResult::new("scure-newton", problem.w_star, w, Vec::new(), start)
}
