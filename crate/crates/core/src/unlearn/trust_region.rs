use serde::{Deserialize, Serialize};

use super::UnlearnError;
use crate::linalg::{cholesky, solve_spd, sym_eigendecompose, vec_ops, CholeskyFactor, SymmetricMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustRegionCase {
    Boundary,
    Interior,
    Hard,
}

/// Minimizer of the cubic model `gᵀs + ½sᵀHs + (L/3)‖s‖³` and its dual certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionSolution {
    /// Step `s`; the updated parameters are `w* + s`.
    pub delta: Vec<f64>,
    pub alpha: f64,
    /// `alpha · L`.
    pub gamma: f64,
    pub iterations: usize,
    pub case: TrustRegionCase,
    /// `|‖s‖ − α|` at exit.
    pub residual: f64,
    /// `v_l(α) = −½⟨(H + αLI)⁻¹g, g⟩ − (L/6)α³`.
    pub dual_value: f64,
    /// `v_u(s)`.
    pub primal_value: f64,
    pub duality_gap: f64,
    /// Multiple of the smallest eigenvector added in the hard case.
    pub tau: Option<f64>,
}

impl TrustRegionSolution {
    pub fn step_norm(&self) -> f64 {
        vec_ops::norm(&self.delta)
    }
}

/// `gᵀs + ½sᵀHs + (L/3)‖s‖³`.
pub fn cubic_model(h: &SymmetricMatrix, g: &[f64], lipschitz: f64, s: &[f64]) -> Result<f64, UnlearnError> {
    let n = vec_ops::norm(s);
    Ok(vec_ops::dot(g, s) + 0.5 * h.quadratic_form(s)? + lipschitz / 3.0 * n * n * n)
}

/// `(2/(3L)) · (α + 2‖s‖)/(α + ‖s‖)² · v_l′(α)²` with `v_l′(α) = (L/2)(‖s‖² − α²)`.
pub fn duality_gap(lipschitz: f64, alpha: f64, step_norm: f64) -> f64 {
    let dv = 0.5 * lipschitz * (step_norm * step_norm - alpha * alpha);
    let denom = (alpha + step_norm).powi(2);
    if denom == 0.0 {
        return 0.0;
    }
    2.0 / (3.0 * lipschitz) * (alpha + 2.0 * step_norm) / denom * dv * dv
}

struct Shifted {
    gamma: f64,
    factor: CholeskyFactor,
    /// `(H + γI)⁻¹ g`.
    solve: Vec<f64>,
    norm: f64,
}

fn factor_at(h: &SymmetricMatrix, g: &[f64], gamma: f64) -> Option<Shifted> {
    let factor = cholesky(&h.shifted(gamma)).ok()?;
    let solve = solve_spd(&factor, g).ok()?;
    let norm = vec_ops::norm(&solve);
    norm.is_finite().then_some(Shifted {
        gamma,
        factor,
        solve,
        norm,
    })
}

/// Solves the cubic-regularized subproblem through its one-dimensional dual.
///
/// With `γ = αL`, stationary points satisfy `(H + γI)s = −g` and `‖s‖ = α`.
/// The solver starts just above `max(0, −λ_min)` and then
///
/// - runs a safeguarded Newton iteration on `φ(γ) = 1/‖s(γ)‖ − L/γ` when the
///   root lies to the right (boundary case) or, for positive definite `H`,
///   to the left of the starting shift;
/// - returns the start directly when it already satisfies `|‖s‖ − α| ≤ eps`;
/// - otherwise pads the step with the smallest eigenvector (hard case).
pub fn trust_region_solve(
    h: &SymmetricMatrix,
    g: &[f64],
    lipschitz: f64,
    eps: f64,
    max_iters: usize,
) -> Result<TrustRegionSolution, UnlearnError> {
    let d = h.dim();
    if g.len() != d {
        return Err(UnlearnError::InvalidConfig(format!(
            "gradient has length {}, Hessian has dimension {d}",
            g.len()
        )));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(UnlearnError::InvalidConfig(format!("lipschitz constant must be positive, got {lipschitz}")));
    }
    if !(eps > 0.0) {
        return Err(UnlearnError::InvalidConfig(format!("tolerance must be positive, got {eps}")));
    }
    if !vec_ops::all_finite(g) || !h.is_finite() {
        return Err(UnlearnError::NonFinite("trust-region input"));
    }

    let eig = sym_eigendecompose(h)?;
    let (lambda_d, v_d) = eig.smallest();
    let gamma_low = (-lambda_d).max(0.0);
    let mut eps_pd = (1e-8 * lambda_d.abs()).max(1e-8);
    let start = loop {
        if let Some(s) = factor_at(h, g, gamma_low + eps_pd) {
            break s;
        }
        eps_pd *= 10.0;
        if eps_pd > 1e8 * (1.0 + lambda_d.abs()) {
            return Err(UnlearnError::NonFinite("no positive definite shift found"));
        }
    };
    let alpha0 = start.gamma / lipschitz;
    let g_norm = vec_ops::norm(g);

    let finish = |shifted: &Shifted, iterations: usize, case: TrustRegionCase| {
        let step: Vec<f64> = shifted.solve.iter().map(|v| -v).collect();
        solution(h, g, lipschitz, shifted, step, iterations, case, None)
    };

    if start.norm > alpha0 {
        let root = secular_newton(h, g, lipschitz, eps, max_iters, start, (gamma_low, f64::INFINITY))?;
        return finish(&root.0, root.1, TrustRegionCase::Boundary);
    }
    if (start.norm - alpha0).abs() <= eps || (g_norm == 0.0 && lambda_d >= 0.0) {
        return finish(&start, 0, TrustRegionCase::Interior);
    }
    if lambda_d > 0.0 {
        // H is positive definite and the root sits below the starting shift.
        let hi = start.gamma;
        let root = secular_newton(h, g, lipschitz, eps, max_iters, start, (0.0, hi))?;
        return finish(&root.0, root.1, TrustRegionCase::Boundary);
    }

    // Hard case: ‖s0 + τ v_d‖ = α0.
    let s0: Vec<f64> = start.solve.iter().map(|v| -v).collect();
    let b = vec_ops::dot(&s0, &v_d);
    let c = start.norm * start.norm - alpha0 * alpha0;
    let disc = (b * b - c).max(0.0).sqrt();
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    for tau in [-b + disc, -b - disc] {
        let mut s = s0.clone();
        vec_ops::axpy(tau, &v_d, &mut s);
        let value = cubic_model(h, g, lipschitz, &s)?;
        if best.as_ref().is_none_or(|(_, _, v)| value < *v) {
            best = Some((tau, s, value));
        }
    }
    let (tau, step, _) = best.expect("two candidate roots");
    solution(h, g, lipschitz, &start, step, 0, TrustRegionCase::Hard, Some(tau))
}

#[allow(clippy::too_many_arguments)]
fn solution(
    h: &SymmetricMatrix,
    g: &[f64],
    lipschitz: f64,
    shifted: &Shifted,
    step: Vec<f64>,
    iterations: usize,
    case: TrustRegionCase,
    tau: Option<f64>,
) -> Result<TrustRegionSolution, UnlearnError> {
    let alpha = shifted.gamma / lipschitz;
    let step_norm = vec_ops::norm(&step);
    let primal_value = cubic_model(h, g, lipschitz, &step)?;
    let dual_value = -0.5 * vec_ops::dot(&shifted.solve, g) - lipschitz / 6.0 * alpha.powi(3);
    if !vec_ops::all_finite(&step) || !primal_value.is_finite() {
        return Err(UnlearnError::NonFinite("trust-region step"));
    }
    Ok(TrustRegionSolution {
        alpha,
        gamma: shifted.gamma,
        iterations,
        case,
        residual: (step_norm - alpha).abs(),
        dual_value,
        primal_value,
        duality_gap: duality_gap(lipschitz, alpha, step_norm),
        tau,
        delta: step,
    })
}

/// Newton iteration on `φ(γ) = 1/‖(H + γI)⁻¹g‖ − L/γ`, kept inside a bracket.
///
/// `φ` is increasing and concave on the feasible interval, so plain Newton
/// steps taken from the left approach the root monotonically. Steps that leave
/// the bracket, or land where `H + γI` is indefinite, fall back to bisection.
fn secular_newton(
    h: &SymmetricMatrix,
    g: &[f64],
    lipschitz: f64,
    eps: f64,
    max_iters: usize,
    start: Shifted,
    bracket: (f64, f64),
) -> Result<(Shifted, usize), UnlearnError> {
    let (mut lo, mut hi) = bracket;
    let mut current = start;
    let mut best_residual = f64::INFINITY;
    for it in 1..=max_iters {
        let alpha = current.gamma / lipschitz;
        let residual = (current.norm - alpha).abs();
        best_residual = best_residual.min(residual);
        if residual <= eps {
            return Ok((current, it - 1));
        }
        let phi = 1.0 / current.norm - 1.0 / alpha;
        if phi < 0.0 {
            lo = lo.max(current.gamma);
        } else {
            hi = hi.min(current.gamma);
        }
        let u = current.factor.forward_solve(&current.solve)?;
        let u2 = vec_ops::dot(&u, &u);
        let dphi = u2 / current.norm.powi(3) + 1.0 / (current.gamma * alpha);
        let proposal = current.gamma - phi / dphi;

        let mut gamma = proposal;
        loop {
            if !(gamma > lo && gamma < hi && gamma.is_finite()) {
                gamma = if hi.is_finite() && lo > 0.0 {
                    0.5 * (lo + hi)
                } else if hi.is_finite() {
                    0.1 * hi
                } else {
                    2.0 * lo.max(current.gamma)
                };
            }
            match factor_at(h, g, gamma) {
                Some(next) => {
                    current = next;
                    break;
                }
                None => {
                    lo = gamma;
                    if hi - lo <= f64::EPSILON * hi {
                        return Err(UnlearnError::NoConvergence {
                            iterations: it,
                            residual: best_residual,
                        });
                    }
                    gamma = f64::NAN;
                }
            }
        }
    }
    let residual = (current.norm - current.gamma / lipschitz).abs();
    if residual <= eps {
        return Ok((current, max_iters));
    }
    Err(UnlearnError::NoConvergence {
        iterations: max_iters,
        residual: best_residual.min(residual),
    })
}
