//! Matrix derivatives of orthogonally invariant functions `h(X) = H(λ)`,
//! where `λ` are the descending eigenvalues of `XᵀX`.
//!
//! * matrix gradient: `(∇̃f)_{ai} = ∂f/∂X_{ai}` (an `n × p` field),
//! * matrix Laplacian: `(Δ̃f)_{ij} = Σ_a ∂²f/∂X_{ai}∂X_{aj}` (a `p × p` field).
//!
//! Every closed form here has an independent finite-difference counterpart
//! in [`fd`].

pub mod fd;
mod objective;

pub use objective::{InvariantObjective, LogObjective, PolynomialObjective, SumObjective, ZeroObjective};

use crate::error::{Error, Result};
use crate::spectral::{gram_spectral, ProblemDims, SpectralPair};
use crate::Mat;

/// Checks the preconditions shared by the second-order formulas: distinct
/// eigenvalues, and a positive smallest eigenvalue when `H` is singular at 0.
pub(crate) fn require_regular(sp: &SpectralPair, obj: &dyn InvariantObjective) -> Result<()> {
    if obj.singular_at_zero() {
        sp.require_distinct()
    } else {
        sp.require_distinct_pairs()
    }
}

fn require_positive_if_singular(sp: &SpectralPair, obj: &dyn InvariantObjective) -> Result<()> {
    if obj.singular_at_zero() {
        let last = sp.dim() - 1;
        let scale = sp.lambda()[0].max(crate::spectral::EPS_ABS);
        if sp.lambda()[last] / scale <= sp.gap_tolerance {
            return Err(Error::ZeroEigenvalue(last));
        }
    }
    Ok(())
}

fn check_index(i: usize, len: usize) -> Result<()> {
    if i >= len {
        return Err(Error::IndexOutOfRange { index: i, len });
    }
    Ok(())
}

/// `h(X) = H(λ(XᵀX))`.
pub fn invariant_value(x: &Mat, obj: &dyn InvariantObjective) -> Result<f64> {
    let sp = gram_spectral(x)?;
    Ok(obj.value(sp.lambda()))
}

/// Matrix gradient of the `i`-th eigenvalue: `2 X v_i v_iᵀ`.
pub fn lambda_gradient(x: &Mat, sp: &SpectralPair, i: usize) -> Result<Mat> {
    check_index(i, sp.dim())?;
    Ok(x * sp.projector(i) * 2.0)
}

/// Derivative of the eigenvector `v_j` with respect to `X_{ak}`:
/// `Σ_{l≠j} v_l ((XV)_{aj} V_{kl} + (XV)_{al} V_{kj}) / (λ_j − λ_l)`.
pub fn eigenvector_derivative(x: &Mat, sp: &SpectralPair, j: usize, a: usize, k: usize) -> Result<crate::Vector> {
    let p = sp.dim();
    check_index(j, p)?;
    check_index(k, p)?;
    check_index(a, x.nrows())?;
    sp.require_distinct_pairs()?;
    let v = &sp.eigenvectors;
    let lam = sp.lambda();
    let xv_row = x.row(a) * v;
    let mut dv = crate::Vector::zeros(p);
    for l in (0..p).filter(|&l| l != j) {
        let coef = (xv_row[j] * v[(k, l)] + xv_row[l] * v[(k, j)]) / (lam[j] - lam[l]);
        dv.axpy(coef, &v.column(l), 1.0);
    }
    Ok(dv)
}

/// `∂(v_j v_jᵀ)/∂X_{ak}`, assembled from [`eigenvector_derivative`].
pub fn projector_jacobian(x: &Mat, sp: &SpectralPair, j: usize, a: usize, k: usize) -> Result<Mat> {
    let dv = eigenvector_derivative(x, sp, j, a, k)?;
    let vj = sp.eigenvectors.column(j);
    Ok(&dv * vj.transpose() + vj * dv.transpose())
}

/// `∇̃h = 2 Σ_i (∂H/∂λ_i) X v_i v_iᵀ`.
pub fn matrix_gradient_invariant(x: &Mat, obj: &dyn InvariantObjective) -> Result<Mat> {
    let sp = gram_spectral(x)?;
    matrix_gradient_at(x, &sp, obj)
}

pub fn matrix_gradient_at(x: &Mat, sp: &SpectralPair, obj: &dyn InvariantObjective) -> Result<Mat> {
    require_positive_if_singular(sp, obj)?;
    let g: Vec<f64> = obj.grad(sp.lambda()).iter().map(|g| 2.0 * g).collect();
    Ok(sp.right_congruence(x, &g))
}

/// `(∇̃h)ᵀ(∇̃h) = V D Vᵀ` with `D_kk = 4 λ_k (∂H/∂λ_k)²`.
pub fn gradient_gram(x: &Mat, obj: &dyn InvariantObjective) -> Result<Mat> {
    let sp = gram_spectral(x)?;
    gradient_gram_at(&sp, obj)
}

pub fn gradient_gram_at(sp: &SpectralPair, obj: &dyn InvariantObjective) -> Result<Mat> {
    require_positive_if_singular(sp, obj)?;
    let lam = sp.lambda();
    let d: Vec<f64> = obj
        .grad(lam)
        .iter()
        .zip(lam)
        .map(|(g, l)| 4.0 * l * g * g)
        .collect();
    Ok(sp.congruence(&d))
}

/// Diagonal of the matrix Laplacian in the eigenbasis:
/// `4 λ_k H_kk + 2n H_k + 2 Σ_{l≠k} λ_l/(λ_k − λ_l) (H_k − H_l)`.
pub fn laplacian_diagonal(sp: &SpectralPair, obj: &dyn InvariantObjective, n: usize) -> Result<Vec<f64>> {
    require_regular(sp, obj)?;
    let lam = sp.lambda();
    let g = obj.grad(lam);
    let h = obj.hess_diag(lam);
    let nf = n as f64;
    let p = lam.len();
    Ok((0..p)
        .map(|k| {
            let pair: f64 = (0..p)
                .filter(|&l| l != k)
                .map(|l| lam[l] / (lam[k] - lam[l]) * (g[k] - g[l]))
                .sum();
            4.0 * lam[k] * h[k] + 2.0 * nf * g[k] + 2.0 * pair
        })
        .collect())
}

/// `Δ̃h = V D Vᵀ` (see [`laplacian_diagonal`]).
pub fn matrix_laplacian_invariant(x: &Mat, obj: &dyn InvariantObjective) -> Result<Mat> {
    let dims = ProblemDims::of(x)?;
    let sp = gram_spectral(x)?;
    matrix_laplacian_at(&sp, obj, dims.n)
}

pub fn matrix_laplacian_at(sp: &SpectralPair, obj: &dyn InvariantObjective, n: usize) -> Result<Mat> {
    let d = laplacian_diagonal(sp, obj, n)?;
    Ok(sp.congruence(&d))
}

/// Scalar Laplacian
/// `Δh = 4 Σ λ_k H_kk + 2 Σ (n − p + 1 + 2 λ_k Σ_{l≠k} 1/(λ_k − λ_l)) H_k`.
pub fn scalar_laplacian_invariant(x: &Mat, obj: &dyn InvariantObjective) -> Result<f64> {
    let dims = ProblemDims::of(x)?;
    let sp = gram_spectral(x)?;
    scalar_laplacian_at(&sp, obj, dims.n)
}

pub fn scalar_laplacian_at(sp: &SpectralPair, obj: &dyn InvariantObjective, n: usize) -> Result<f64> {
    require_regular(sp, obj)?;
    let lam = sp.lambda();
    let p = lam.len();
    let g = obj.grad(lam);
    let h = obj.hess_diag(lam);
    let base = n as f64 - p as f64 + 1.0;
    let mut total = 0.0;
    for k in 0..p {
        let inv: f64 = (0..p).filter(|&l| l != k).map(|l| 1.0 / (lam[k] - lam[l])).sum();
        total += 4.0 * lam[k] * h[k] + 2.0 * (base + 2.0 * lam[k] * inv) * g[k];
    }
    Ok(total)
}

/// Both sides of `Σ_{l≠k} (λ_k + λ_l)/(λ_k − λ_l) = 2 λ_k Σ_{l≠k} 1/(λ_k − λ_l) − p + 1`.
pub fn lambda_pair_identity(lambda: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = lambda.len();
    for k in 0..p {
        for l in (k + 1)..p {
            if lambda[k] == lambda[l] {
                return Err(Error::DegeneratePair(k, l));
            }
        }
    }
    let pf = p as f64;
    let lhs = (0..p)
        .map(|k| {
            (0..p)
                .filter(|&l| l != k)
                .map(|l| (lambda[k] + lambda[l]) / (lambda[k] - lambda[l]))
                .sum()
        })
        .collect();
    let rhs = (0..p)
        .map(|k| {
            let inv: f64 = (0..p).filter(|&l| l != k).map(|l| 1.0 / (lambda[k] - lambda[l])).sum();
            2.0 * lambda[k] * inv - pf + 1.0
        })
        .collect();
    Ok((lhs, rhs))
}
