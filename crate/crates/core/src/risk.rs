//! Unbiased per-sample estimates of the matrix quadratic risk
//! `R(M, M̂) = E_M (M̂ − M)ᵀ(M̂ − M)` for orthogonally invariant estimators.
//!
//! For `M̂ = X + ∇̃h(X)` with `h(X) = H(λ)` the estimate is
//! `n I_p + V D Vᵀ`; the modules below differ only in how `D` is written.
//! Noise variance is fixed at one.

use serde::{Deserialize, Serialize};

use crate::calculus::{
    fd::fd_matrix_divergence, gradient_gram_at, matrix_laplacian_at, require_regular, InvariantObjective,
};
use crate::error::{Error, Result};
use crate::estimators::{stein_coeffs, EstimatorKind, EstimatorSpec, ShrinkageCoefficients};
use crate::spectral::{gram_spectral, thin_svd, ProblemDims, SpectralPair};
use crate::Mat;

/// Diagonal `D` of the risk correction `V D Vᵀ`, aligned with descending `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskDiagonal(pub Vec<f64>);

impl RiskDiagonal {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `n I_p + V D Vᵀ`: the per-sample unbiased estimate of the risk matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SureMatrix {
    pub entries: Mat,
    pub diagonal: RiskDiagonal,
}

impl SureMatrix {
    fn assemble(sp: &SpectralPair, d: Vec<f64>, n: usize) -> Self {
        let p = sp.dim();
        let entries = Mat::identity(p, p) * n as f64 + sp.congruence(&d);
        Self {
            entries,
            diagonal: RiskDiagonal(d),
        }
    }

    /// Unbiased estimate of the Frobenius risk.
    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }
}

fn prepare(x: &Mat, dims: ProblemDims) -> Result<SpectralPair> {
    dims.expect_matrix(x)?;
    gram_spectral(x)
}

/// `D_kk = 4 (2 λ_k H_kk + n H_k + λ_k H_k² + Σ_{l≠k} λ_l/(λ_k − λ_l) (H_k − H_l))`.
pub fn risk_diagonal_general(sp: &SpectralPair, obj: &dyn InvariantObjective, n: usize) -> Result<RiskDiagonal> {
    require_regular(sp, obj)?;
    let lam = sp.lambda();
    let p = lam.len();
    let g = obj.grad(lam);
    let h = obj.hess_diag(lam);
    let nf = n as f64;
    Ok(RiskDiagonal(
        (0..p)
            .map(|k| {
                let pair: f64 = (0..p)
                    .filter(|&l| l != k)
                    .map(|l| lam[l] / (lam[k] - lam[l]) * (g[k] - g[l]))
                    .sum();
                4.0 * (2.0 * lam[k] * h[k] + nf * g[k] + lam[k] * g[k] * g[k] + pair)
            })
            .collect(),
    ))
}

/// Unbiased risk matrix of the pseudo-Bayes estimator `X + ∇̃h(X)`.
pub fn sure_matrix_general(x: &Mat, obj: &dyn InvariantObjective, dims: ProblemDims) -> Result<SureMatrix> {
    let sp = prepare(x, dims)?;
    sure_matrix_general_at(&sp, obj, dims)
}

pub fn sure_matrix_general_at(sp: &SpectralPair, obj: &dyn InvariantObjective, dims: ProblemDims) -> Result<SureMatrix> {
    let d = risk_diagonal_general(sp, obj, dims.n)?;
    Ok(SureMatrix::assemble(sp, d.0, dims.n))
}

/// The same risk matrix assembled as `n I + 2 Δ̃h + (∇̃h)ᵀ ∇̃h`.
pub fn sure_matrix_by_parts(x: &Mat, obj: &dyn InvariantObjective, dims: ProblemDims) -> Result<Mat> {
    let sp = prepare(x, dims)?;
    let lap = matrix_laplacian_at(&sp, obj, dims.n)?;
    let gram = gradient_gram_at(&sp, obj)?;
    Ok(Mat::identity(dims.p, dims.p) * dims.nf() + lap * 2.0 + gram)
}

/// `D_kk = c_k (c_k − 2n + 4)/λ_k − (2/λ_k) Σ_{l≠k} (c_k λ_l − c_l λ_k)/(λ_k − λ_l)`.
pub fn shrinkage_diagonal(lambda: &[f64], c: &[f64], n: usize) -> RiskDiagonal {
    let p = lambda.len();
    let nf = n as f64;
    RiskDiagonal(
        (0..p)
            .map(|k| {
                let pair: f64 = (0..p)
                    .filter(|&l| l != k)
                    .map(|l| (c[k] * lambda[l] - c[l] * lambda[k]) / (lambda[k] - lambda[l]))
                    .sum();
                (c[k] * (c[k] - 2.0 * nf + 4.0) - 2.0 * pair) / lambda[k]
            })
            .collect(),
    )
}

/// Unbiased risk matrix of `spectral_shrinkage(·, c)`.
pub fn sure_matrix_shrinkage(x: &Mat, c: &ShrinkageCoefficients, dims: ProblemDims) -> Result<SureMatrix> {
    let sp = prepare(x, dims)?;
    sure_matrix_shrinkage_at(&sp, c, dims)
}

pub fn sure_matrix_shrinkage_at(sp: &SpectralPair, c: &ShrinkageCoefficients, dims: ProblemDims) -> Result<SureMatrix> {
    if c.len() != dims.p {
        return Err(Error::Shape {
            expected: format!("{} coefficients", dims.p),
            got: c.len().to_string(),
        });
    }
    sp.require_distinct()?;
    let d = shrinkage_diagonal(sp.lambda(), c.as_slice(), dims.n);
    Ok(SureMatrix::assemble(sp, d.0, dims.n))
}

/// `D_kk = −(n + p − 2k − 1)(n − 3p + 2k − 1)/λ_k + 4 Σ_{l≠k} (k − l)/(λ_k − λ_l)`.
///
/// Every entry is nonpositive when `n >= 3p − 1` and `λ` is descending.
pub fn stein_diagonal(lambda: &[f64], n: usize) -> RiskDiagonal {
    let p = lambda.len();
    let (nf, pf) = (n as f64, p as f64);
    RiskDiagonal(
        (0..p)
            .map(|k| {
                let kk = (k + 1) as f64;
                let pair: f64 = (0..p)
                    .filter(|&l| l != k)
                    .map(|l| (k as f64 - l as f64) / (lambda[k] - lambda[l]))
                    .sum();
                -(nf + pf - 2.0 * kk - 1.0) * (nf - 3.0 * pf + 2.0 * kk - 1.0) / lambda[k] + 4.0 * pair
            })
            .collect(),
    )
}

/// Unbiased risk matrix of Stein's estimator.
pub fn sure_matrix_stein(x: &Mat, dims: ProblemDims) -> Result<SureMatrix> {
    let sp = prepare(x, dims)?;
    sure_matrix_stein_at(&sp, dims)
}

pub fn sure_matrix_stein_at(sp: &SpectralPair, dims: ProblemDims) -> Result<SureMatrix> {
    stein_coeffs(dims)?;
    sp.require_distinct()?;
    let d = stein_diagonal(sp.lambda(), dims.n);
    Ok(SureMatrix::assemble(sp, d.0, dims.n))
}

/// Unbiased Frobenius risk,
/// `np + 4 Σ (2 λ_k H_kk + n H_k + λ_k H_k²) + 4 Σ H_k (2 λ_k Σ_{l≠k} 1/(λ_k − λ_l) − p + 1)`.
pub fn sure_frobenius(x: &Mat, obj: &dyn InvariantObjective, dims: ProblemDims) -> Result<f64> {
    let sp = prepare(x, dims)?;
    frobenius_terms(&sp, obj, dims, |lam, k, _p| {
        let inv: f64 = (0..lam.len()).filter(|&l| l != k).map(|l| 1.0 / (lam[k] - lam[l])).sum();
        2.0 * lam[k] * inv - lam.len() as f64 + 1.0
    })
}

/// Same quantity with the pair sum written as `Σ_{l≠k} (λ_k + λ_l)/(λ_k − λ_l)`.
pub fn sure_frobenius_pairwise(x: &Mat, obj: &dyn InvariantObjective, dims: ProblemDims) -> Result<f64> {
    let sp = prepare(x, dims)?;
    frobenius_terms(&sp, obj, dims, |lam, k, p| {
        (0..p).filter(|&l| l != k).map(|l| (lam[k] + lam[l]) / (lam[k] - lam[l])).sum()
    })
}

fn frobenius_terms(
    sp: &SpectralPair,
    obj: &dyn InvariantObjective,
    dims: ProblemDims,
    pair_sum: impl Fn(&[f64], usize, usize) -> f64,
) -> Result<f64> {
    require_regular(sp, obj)?;
    let lam = sp.lambda();
    let p = lam.len();
    let g = obj.grad(lam);
    let h = obj.hess_diag(lam);
    let nf = dims.nf();
    let mut local = 0.0;
    let mut pairs = 0.0;
    for k in 0..p {
        local += 2.0 * lam[k] * h[k] + nf * g[k] + lam[k] * g[k] * g[k];
        pairs += g[k] * pair_sum(lam, k, p);
    }
    Ok(nf * dims.pf() + 4.0 * local + 4.0 * pairs)
}

/// Numerical risk estimate built from `g = M̂ − X` and its finite-difference
/// matrix divergence.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericSure {
    /// `n I + div g + (div g)ᵀ + gᵀ g`.
    pub entries: Mat,
    /// Set for positive-part estimators when some `|σ_k² − c_k| < 10·step·σ_k`,
    /// where the step may straddle the clipping kink.
    pub near_kink: bool,
}

/// Finite-difference version of the unbiased risk identity, usable for any
/// estimator that is differentiable at `x`.
pub fn divergence_sure_numeric(x: &Mat, est: &EstimatorSpec, dims: ProblemDims, step: f64) -> Result<NumericSure> {
    dims.expect_matrix(x)?;
    let p = dims.p;
    let residual = |m: &Mat| -> Result<Mat> {
        let out = est.apply(m)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("estimator output"));
        }
        Ok(out - m)
    };
    let g = residual(x)?;
    let div = fd_matrix_divergence(x, residual, step)?;
    let near_kink = match &est.kind {
        EstimatorKind::PositivePartShrinkage(c) => {
            let svd = thin_svd(x)?;
            svd.singular_values
                .iter()
                .zip(c.as_slice())
                .any(|(&s, &ck)| (s * s - ck).abs() < 10.0 * step * s)
        }
        _ => false,
    };
    let entries = Mat::identity(p, p) * dims.nf() + &div + div.transpose() + g.transpose() * &g;
    Ok(NumericSure { entries, near_kink })
}

/// Analytic unbiased risk matrix for any estimator that has one.
pub fn sure_for_estimator(sp: &SpectralPair, est: &EstimatorSpec, dims: ProblemDims) -> Result<SureMatrix> {
    match &est.kind {
        EstimatorKind::Mle => Ok(SureMatrix::assemble(sp, vec![0.0; dims.p], dims.n)),
        EstimatorKind::Shrinkage(c) => sure_matrix_shrinkage_at(sp, c, dims),
        EstimatorKind::PseudoBayes(obj) => sure_matrix_general_at(sp, obj.as_ref(), dims),
        EstimatorKind::PositivePartShrinkage(_) => Err(Error::NoAnalyticRisk(est.label.clone())),
    }
}

/// Exact risk of the Efron–Morris estimator at `M = 0`: `(p + 1) I_p`,
/// from `E[(XᵀX)⁻¹] = I_p/(n − p − 1)` for a central Wishart.
pub fn em_zero_mean_exact_risk(dims: ProblemDims) -> Result<Mat> {
    if dims.n <= dims.p + 1 {
        return Err(Error::InvalidDims(format!(
            "exact Efron-Morris risk needs n > p + 1, got n = {}, p = {}",
            dims.n, dims.p
        )));
    }
    Ok(Mat::identity(dims.p, dims.p) * (dims.pf() + 1.0))
}
