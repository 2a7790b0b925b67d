//! The estimator zoo: MLE, pseudo-Bayes `X + ∇̃h(X)`, singular-value
//! shrinkage `U diag(σ_k − c_k/σ_k) Vᵀ` and its positive part.
//!
//! Every estimator here is orthogonally equivariant:
//! `M̂(PXQ) = P M̂(X) Q` for orthogonal `P`, `Q`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calculus::{matrix_gradient_at, InvariantObjective, LogObjective};
use crate::error::{Error, Result};
use crate::spectral::{check_finite, gram_spectral, thin_svd, ProblemDims, SpectralPair};
use crate::Mat;

/// Labels accepted by [`EstimatorSpec::from_label`], besides `custom:...`.
pub const NAMED_LABELS: [&str; 5] = ["mle", "em", "stein", "em+", "stein+"];

/// Nonnegative shrinkage amounts `c_1, …, c_p`, indexed by descending
/// singular value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ShrinkageCoefficients(Vec<f64>);

impl ShrinkageCoefficients {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::InvalidCoefficients("empty coefficient vector".into()));
        }
        if let Some((k, v)) = c.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidCoefficients(format!("c[{k}] = {v} must be finite and >= 0")));
        }
        Ok(Self(c))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn expect_len(&self, p: usize) -> Result<()> {
        if self.len() != p {
            return Err(Error::Shape {
                expected: format!("{p} coefficients"),
                got: format!("{}", self.len()),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for ShrinkageCoefficients {
    type Error = Error;

    fn try_from(c: Vec<f64>) -> Result<Self> {
        Self::new(c)
    }
}

impl From<ShrinkageCoefficients> for Vec<f64> {
    fn from(c: ShrinkageCoefficients) -> Self {
        c.0
    }
}

/// Efron–Morris coefficients `c_k ≡ n − p − 1`.
pub fn efron_morris_coeffs(dims: ProblemDims) -> Result<ShrinkageCoefficients> {
    if dims.n <= dims.p + 1 {
        return Err(Error::InvalidDims(format!(
            "Efron-Morris needs n > p + 1, got n = {}, p = {}",
            dims.n, dims.p
        )));
    }
    ShrinkageCoefficients::new(vec![(dims.n - dims.p - 1) as f64; dims.p])
}

/// Stein's coefficients `c_k = n + p − 2k − 1` (1-based `k`).
pub fn stein_coeffs(dims: ProblemDims) -> Result<ShrinkageCoefficients> {
    if dims.n < dims.p + 1 {
        return Err(Error::InvalidDims(format!(
            "Stein coefficients need n >= p + 1, got n = {}, p = {}",
            dims.n, dims.p
        )));
    }
    let (n, p) = (dims.n as f64, dims.p as f64);
    ShrinkageCoefficients::new((1..=dims.p).map(|k| n + p - 2.0 * k as f64 - 1.0).collect())
}

/// `H(λ) = −½ Σ c_k log λ_k`, whose pseudo-Bayes estimator is
/// `spectral_shrinkage(·, c)`.
pub fn log_objective(c: &ShrinkageCoefficients) -> LogObjective {
    LogObjective::new(c.as_slice().to_vec())
}

/// The MLE `M̂ = X`.
pub fn mle(x: &Mat) -> Mat {
    x.clone()
}

/// `M̂ = X + ∇̃h(X)`.
pub fn pseudo_bayes(x: &Mat, obj: &dyn InvariantObjective) -> Result<Mat> {
    let sp = gram_spectral(x)?;
    Ok(x + matrix_gradient_at(x, &sp, obj)?)
}

fn svd_singular(sigma: f64, sigma_max: f64, n: usize) -> bool {
    sigma <= sigma_max * f64::EPSILON * n as f64 || sigma == 0.0
}

/// `U diag(σ_k − c_k/σ_k) Vᵀ`.
pub fn spectral_shrinkage(x: &Mat, c: &ShrinkageCoefficients) -> Result<Mat> {
    c.expect_len(x.ncols())?;
    let svd = thin_svd(x)?;
    let s = svd.singular_values.as_slice();
    let shrunk = s
        .iter()
        .zip(c.as_slice())
        .enumerate()
        .map(|(k, (&sigma, &ck))| {
            if ck == 0.0 {
                Ok(sigma)
            } else if svd_singular(sigma, s[0], x.nrows()) {
                Err(Error::Singular(k))
            } else {
                Ok(sigma - ck / sigma)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(svd.recompose(&shrunk))
}

/// `U diag((σ_k − c_k/σ_k)₊) Vᵀ`; a zero singular value maps to zero.
pub fn positive_part_shrinkage(x: &Mat, c: &ShrinkageCoefficients) -> Result<Mat> {
    c.expect_len(x.ncols())?;
    let svd = thin_svd(x)?;
    let s = svd.singular_values.as_slice();
    let shrunk: Vec<f64> = s
        .iter()
        .zip(c.as_slice())
        .map(|(&sigma, &ck)| {
            if ck == 0.0 {
                sigma
            } else if svd_singular(sigma, s[0], x.nrows()) {
                0.0
            } else {
                (sigma - ck / sigma).max(0.0)
            }
        })
        .collect();
    Ok(svd.recompose(&shrunk))
}

/// Shrinkage evaluated through the Gram eigenpair:
/// `U diag(σ_k f_k) Vᵀ = X V diag(f) Vᵀ` with `f_k = 1 − c_k/λ_k`.
fn shrink_via_gram(x: &Mat, sp: &SpectralPair, c: &ShrinkageCoefficients, positive_part: bool) -> Result<Mat> {
    c.expect_len(sp.dim())?;
    let lam = sp.lambda();
    let floor = lam[0] * 1e-20;
    let factors = lam
        .iter()
        .zip(c.as_slice())
        .enumerate()
        .map(|(k, (&l, &ck))| {
            if ck == 0.0 {
                Ok(1.0)
            } else if l <= floor || l == 0.0 {
                if positive_part {
                    Ok(0.0)
                } else {
                    Err(Error::Singular(k))
                }
            } else {
                let f = 1.0 - ck / l;
                Ok(if positive_part { f.max(0.0) } else { f })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sp.right_congruence(x, &factors))
}

/// Which member of the zoo an [`EstimatorSpec`] denotes.
#[derive(Debug, Clone)]
pub enum EstimatorKind {
    Mle,
    Shrinkage(ShrinkageCoefficients),
    PositivePartShrinkage(ShrinkageCoefficients),
    PseudoBayes(Arc<dyn InvariantObjective>),
}

/// A labelled estimator, shareable across threads.
#[derive(Debug, Clone)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub label: String,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind, label: impl Into<String>) -> Self {
        Self {
            kind,
            label: label.into(),
        }
    }

    pub fn mle() -> Self {
        Self::new(EstimatorKind::Mle, "mle")
    }

    pub fn pseudo_bayes(obj: Arc<dyn InvariantObjective>) -> Self {
        let label = format!("pseudo-bayes:{}", obj.label());
        Self::new(EstimatorKind::PseudoBayes(obj), label)
    }

    /// Resolves a CLI label (`mle`, `em`, `stein`, `em+`, `stein+`,
    /// `custom:c1,...,cp`) for the given dimensions.
    pub fn from_label(label: &str, dims: ProblemDims) -> Result<Self> {
        let label = label.trim();
        let kind = match label {
            "mle" => EstimatorKind::Mle,
            "em" => EstimatorKind::Shrinkage(efron_morris_coeffs(dims)?),
            "stein" => EstimatorKind::Shrinkage(stein_coeffs(dims)?),
            "em+" => EstimatorKind::PositivePartShrinkage(efron_morris_coeffs(dims)?),
            "stein+" => EstimatorKind::PositivePartShrinkage(stein_coeffs(dims)?),
            other => match other.strip_prefix("custom:") {
                Some(list) => {
                    let c = list
                        .split(',')
                        .map(|t| {
                            t.trim()
                                .parse::<f64>()
                                .map_err(|_| Error::InvalidCoefficients(format!("cannot parse `{t}`")))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    let c = ShrinkageCoefficients::new(c)?;
                    c.expect_len(dims.p)?;
                    EstimatorKind::Shrinkage(c)
                }
                None => {
                    return Err(Error::UnknownEstimator {
                        label: label.to_string(),
                    })
                }
            },
        };
        Ok(Self::new(kind, label))
    }

    /// Shrinkage coefficients, when this is a shrinkage-family member.
    pub fn coefficients(&self) -> Option<&ShrinkageCoefficients> {
        match &self.kind {
            EstimatorKind::Shrinkage(c) | EstimatorKind::PositivePartShrinkage(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_positive_part(&self) -> bool {
        matches!(self.kind, EstimatorKind::PositivePartShrinkage(_))
    }

    /// Whether [`crate::risk::sure_for_estimator`] has a closed form for this estimator.
    pub fn has_analytic_sure(&self) -> bool {
        !self.is_positive_part()
    }

    /// `M̂(X)`, using the singular value decomposition for the shrinkage family.
    pub fn apply(&self, x: &Mat) -> Result<Mat> {
        check_finite(x, "observation")?;
        match &self.kind {
            EstimatorKind::Mle => Ok(mle(x)),
            EstimatorKind::Shrinkage(c) => spectral_shrinkage(x, c),
            EstimatorKind::PositivePartShrinkage(c) => positive_part_shrinkage(x, c),
            EstimatorKind::PseudoBayes(obj) => pseudo_bayes(x, obj.as_ref()),
        }
    }

    /// `M̂(X)` from a precomputed Gram eigenpair of `X`.
    pub fn apply_at(&self, x: &Mat, sp: &SpectralPair) -> Result<Mat> {
        match &self.kind {
            EstimatorKind::Mle => Ok(mle(x)),
            EstimatorKind::Shrinkage(c) => shrink_via_gram(x, sp, c, false),
            EstimatorKind::PositivePartShrinkage(c) => shrink_via_gram(x, sp, c, true),
            EstimatorKind::PseudoBayes(obj) => Ok(x + matrix_gradient_at(x, sp, obj.as_ref())?),
        }
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}
