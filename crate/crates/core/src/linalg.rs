//! Dense symmetric linear algebra.
//!
//! Everything here works on row-major `f64` storage. Matrices are small enough
//! (a few thousand rows at most) that dense factorizations are the simplest
//! robust choice. The eigensolver is Householder tridiagonalization followed by
//! the implicit QL iteration, the classic `tred2`/`tql2` pair.

use thiserror::Error;

/// Relative cut used by [`pinv_apply`] when the caller has no better value.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("eigensolver did not converge after {iterations} iterations (off-diagonal residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Small helpers over plain slices.
pub mod vec_ops {
    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    pub fn norm(a: &[f64]) -> f64 {
        dot(a, a).sqrt()
    }

    pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }

    pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }

    pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
        a.iter().map(|x| x * s).collect()
    }

    /// `y += a * x`
    pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += a * xi;
        }
    }

    pub fn distance(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(a: &[f64]) -> bool {
        a.iter().all(|x| x.is_finite())
    }
}

/// A dense real symmetric matrix.
///
/// Construction symmetrizes the input as `(A + Aᵀ)/2`, so `get(i, j) == get(j, i)`
/// holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn from_row_major(dim: usize, mut data: Vec<f64>) -> Result<Self, LinalgError> {
        if dim == 0 {
            return Err(LinalgError::InvalidArgument("dimension must be at least 1".into()));
        }
        if data.len() != dim * dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                data[i * dim + j] = avg;
                data[j * dim + i] = avg;
            }
        }
        Ok(Self { dim, data })
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self, LinalgError> {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self::from_row_major(dim, data)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        assert!(dim >= 1, "dimension must be at least 1");
        let mut data = vec![0.0; dim * dim];
        for (i, &v) in diag.iter().enumerate() {
            data[i * dim + i] = v;
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        vec_ops::norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        vec_ops::all_finite(&self.data)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        self.check_len(x.len())?;
        Ok((0..self.dim).map(|i| vec_ops::dot(self.row(i), x)).collect())
    }

    /// `xᵀ A x`
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64, LinalgError> {
        Ok(vec_ops::dot(x, &self.mul_vec(x)?))
    }

    /// `A + γI`
    pub fn shifted(&self, gamma: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.data[i * self.dim + i] += gamma;
        }
        out
    }

    /// `a·A + b·B`, both of the same dimension.
    pub fn linear_combination(a: f64, lhs: &Self, b: f64, rhs: &Self) -> Result<Self, LinalgError> {
        lhs.check_len(rhs.dim)?;
        let data = lhs
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self { dim: lhs.dim, data })
    }

    fn check_len(&self, len: usize) -> Result<(), LinalgError> {
        if len != self.dim {
            Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                found: len,
            })
        } else {
            Ok(())
        }
    }
}

/// Spectral factorization `A = Q Λ Qᵀ` with eigenvalues sorted non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    eigenvalues: Vec<f64>,
    /// Row-major `d × d`; column `k` is the eigenvector for `eigenvalues[k]`.
    eigenvectors: Vec<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Row-major matrix whose columns are the eigenvectors.
    pub fn eigenvector_matrix(&self) -> &[f64] {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| self.eigenvectors[i * d + k]).collect()
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn smallest(&self) -> (f64, Vec<f64>) {
        let k = self.dim() - 1;
        (self.eigenvalues[k], self.eigenvector(k))
    }

    /// `Qᵀ x`: coordinates of `x` in the eigenbasis.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        for i in 0..d {
            let xi = x[i];
            let row = &self.eigenvectors[i * d..(i + 1) * d];
            for (o, q) in out.iter_mut().zip(row) {
                *o += q * xi;
            }
        }
        out
    }

    /// `Q c`: maps eigenbasis coordinates back.
    pub fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| vec_ops::dot(&self.eigenvectors[i * d..(i + 1) * d], coeffs))
            .collect()
    }

    pub fn reconstruct(&self) -> SymmetricMatrix {
        let d = self.dim();
        let q = &self.eigenvectors;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += q[i * d + k] * self.eigenvalues[k] * q[j * d + k];
                }
                data[i * d + j] = s;
                data[j * d + i] = s;
            }
        }
        SymmetricMatrix { dim: d, data }
    }

    /// Number of eigenvalues with `|λ| > rank_tol · max|λ|`.
    pub fn numerical_rank(&self, rank_tol: f64) -> usize {
        let cut = rank_tol * self.spectral_radius();
        if cut == 0.0 && self.spectral_radius() == 0.0 {
            return 0;
        }
        self.eigenvalues.iter().filter(|l| l.abs() > cut).count()
    }

    fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()))
    }
}

/// Symmetric eigendecomposition via Householder tridiagonalization and implicit QL.
///
/// Fails only when the QL sweep exceeds `100·d²` iterations, reporting the
/// remaining off-diagonal mass.
pub fn sym_eigendecompose(a: &SymmetricMatrix) -> Result<EigenDecomposition, LinalgError> {
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = a.dim();
    if a.frobenius_norm() == 0.0 {
        return Ok(EigenDecomposition {
            eigenvalues: vec![0.0; n],
            eigenvectors: SymmetricMatrix::identity(n).data,
        });
    }
    let mut v = a.data.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    implicit_ql(n, &mut v, &mut d, &mut e, a.frobenius_norm())?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]).then(i.cmp(&j)));
    let eigenvalues = order.iter().map(|&k| d[k]).collect();
    let mut eigenvectors = vec![0.0; n * n];
    for (new_k, &old_k) in order.iter().enumerate() {
        for i in 0..n {
            eigenvectors[i * n + new_k] = v[i * n + old_k];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

// Householder reduction to tridiagonal form. On exit `v` holds the accumulated
// orthogonal transform, `d` the diagonal and `e[1..]` the sub-diagonal.
fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let idx = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
                v[idx(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = 0.0;
    }
    v[idx(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn implicit_ql(
    n: usize,
    v: &mut [f64],
    d: &mut [f64],
    e: &mut [f64],
    _frob: f64,
) -> Result<(), LinalgError> {
    let idx = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let max_iterations = 100 * n * n;
    let mut iterations = 0usize;
    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= f64::EPSILON * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }

        if m > l {
            loop {
                iterations += 1;
                if iterations > max_iterations {
                    let residual = e.iter().map(|x| x * x).sum::<f64>().sqrt();
                    return Err(LinalgError::NoConvergence {
                        iterations,
                        residual,
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[idx(k, i + 1)];
                        v[idx(k, i + 1)] = s * v[idx(k, i)] + c * h;
                        v[idx(k, i)] = c * v[idx(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= f64::EPSILON * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Lower-triangular `L` with `L Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// Solves `L u = b`.
    pub fn forward_solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        self.check_len(b.len())?;
        let n = self.dim;
        let mut u = b.to_vec();
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i];
            let s = u[i] - vec_ops::dot(row, &u[..i]);
            u[i] = s / self.lower[i * n + i];
        }
        Ok(u)
    }

    /// Solves `Lᵀ x = u`.
    pub fn backward_solve(&self, u: &[f64]) -> Result<Vec<f64>, LinalgError> {
        self.check_len(u.len())?;
        let n = self.dim;
        let mut x = u.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lower[k * n + i] * x[k];
            }
            x[i] = s / self.lower[i * n + i];
        }
        Ok(x)
    }

    pub fn reconstruct(&self) -> SymmetricMatrix {
        let n = self.dim;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s = vec_ops::dot(
                    &self.lower[i * n..i * n + j + 1],
                    &self.lower[j * n..j * n + j + 1],
                );
                data[i * n + j] = s;
                data[j * n + i] = s;
            }
        }
        SymmetricMatrix { dim: n, data }
    }

    fn check_len(&self, len: usize) -> Result<(), LinalgError> {
        if len != self.dim {
            Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                found: len,
            })
        } else {
            Ok(())
        }
    }
}

pub fn cholesky(a: &SymmetricMatrix) -> Result<CholeskyFactor, LinalgError> {
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = a.dim();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let row_j = &l[j * n..j * n + j];
        let pivot = a.get(j, j) - vec_ops::dot(row_j, row_j);
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { index: j, pivot });
        }
        let diag = pivot.sqrt();
        l[j * n + j] = diag;
        for i in (j + 1)..n {
            let s = a.get(i, j) - vec_ops::dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            l[i * n + j] = s / diag;
        }
    }
    Ok(CholeskyFactor { dim: n, lower: l })
}

/// Solves `(L Lᵀ) x = b`.
pub fn solve_spd(factor: &CholeskyFactor, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let u = factor.forward_solve(b)?;
    factor.backward_solve(&u)
}

/// Minimum-norm least-squares solution of `A Δ = g` through the spectrum.
///
/// Components with `|λ_i| ≤ rank_tol · max|λ|` are treated as null space and
/// dropped. A zero spectrum yields the zero vector.
pub fn pinv_apply(eig: &EigenDecomposition, g: &[f64], rank_tol: f64) -> Result<Vec<f64>, LinalgError> {
    if g.len() != eig.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: eig.dim(),
            found: g.len(),
        });
    }
    if !(rank_tol > 0.0) {
        return Err(LinalgError::InvalidArgument(format!(
            "rank_tol must be positive, got {rank_tol}"
        )));
    }
    let cut = rank_tol * eig.spectral_radius();
    let mut coeffs = eig.project(g);
    for (c, &lambda) in coeffs.iter_mut().zip(eig.eigenvalues()) {
        if lambda.abs() > cut && lambda != 0.0 {
            *c /= lambda;
        } else {
            *c = 0.0;
        }
    }
    Ok(eig.combine(&coeffs))
}

/// `(A + γI)⁻¹ g` through a Cholesky factorization of the shifted matrix.
pub fn damped_apply(a: &SymmetricMatrix, g: &[f64], gamma: f64) -> Result<Vec<f64>, LinalgError> {
    if g.len() != a.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.dim(),
            found: g.len(),
        });
    }
    let factor = cholesky(&a.shifted(gamma))?;
    solve_spd(&factor, g)
}
