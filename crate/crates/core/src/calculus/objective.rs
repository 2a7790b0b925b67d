//! Spectral objectives `H(λ)` for orthogonally invariant functions
//! `h(X) = H(λ(XᵀX))`.

use std::fmt;

/// A function of the descending eigenvalues of `XᵀX`, with its gradient and
/// the diagonal of its Hessian.
///
/// Off-diagonal second partials are never needed: they cancel in the matrix
/// Laplacian. Implementations must be callable concurrently.
pub trait InvariantObjective: Send + Sync + fmt::Debug {
    fn label(&self) -> String;

    fn value(&self, lambda: &[f64]) -> f64;

    /// `∂H/∂λ_k` for every `k`.
    fn grad(&self, lambda: &[f64]) -> Vec<f64>;

    /// `∂²H/∂λ_k²` for every `k`.
    fn hess_diag(&self, lambda: &[f64]) -> Vec<f64>;

    /// True when `H` blows up as an eigenvalue approaches zero.
    fn singular_at_zero(&self) -> bool {
        false
    }
}

/// `H ≡ 0`; the pseudo-Bayes estimator it induces is the MLE.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroObjective;

impl InvariantObjective for ZeroObjective {
    fn label(&self) -> String {
        "zero".into()
    }

    fn value(&self, _lambda: &[f64]) -> f64 {
        0.0
    }

    fn grad(&self, lambda: &[f64]) -> Vec<f64> {
        vec![0.0; lambda.len()]
    }

    fn hess_diag(&self, lambda: &[f64]) -> Vec<f64> {
        vec![0.0; lambda.len()]
    }
}

/// `H(λ) = Σ λ_k`, i.e. `h(X) = ‖X‖²_F`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SumObjective;

impl InvariantObjective for SumObjective {
    fn label(&self) -> String {
        "sum".into()
    }

    fn value(&self, lambda: &[f64]) -> f64 {
        lambda.iter().sum()
    }

    fn grad(&self, lambda: &[f64]) -> Vec<f64> {
        vec![1.0; lambda.len()]
    }

    fn hess_diag(&self, lambda: &[f64]) -> Vec<f64> {
        vec![0.0; lambda.len()]
    }
}

/// `H(λ) = -½ Σ w_k log λ_k`.
///
/// With nonnegative weights this is the objective whose pseudo-Bayes
/// estimator is singular-value shrinkage with coefficients `w`. Weights of
/// `-2` give `log det XᵀX`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogObjective {
    weights: Vec<f64>,
}

impl LogObjective {
    pub fn new(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    /// `H(λ) = Σ log λ_k = log det XᵀX`.
    pub fn log_det(p: usize) -> Self {
        Self::new(vec![-2.0; p])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl InvariantObjective for LogObjective {
    fn label(&self) -> String {
        let w: Vec<String> = self.weights.iter().map(|w| format!("{w}")).collect();
        format!("log[{}]", w.join(","))
    }

    fn value(&self, lambda: &[f64]) -> f64 {
        -0.5 * self
            .weights
            .iter()
            .zip(lambda)
            .map(|(w, l)| if *w == 0.0 { 0.0 } else { w * l.ln() })
            .sum::<f64>()
    }

    fn grad(&self, lambda: &[f64]) -> Vec<f64> {
        self.weights.iter().zip(lambda).map(|(w, l)| -w / (2.0 * l)).collect()
    }

    fn hess_diag(&self, lambda: &[f64]) -> Vec<f64> {
        self.weights.iter().zip(lambda).map(|(w, l)| w / (2.0 * l * l)).collect()
    }

    fn singular_at_zero(&self) -> bool {
        self.weights.iter().any(|&w| w != 0.0)
    }
}

/// Low-degree polynomial in the eigenvalues:
/// `H(λ) = Σ a_k λ_k + Σ b_k λ_k² + Σ_{k<l} e_kl λ_k λ_l`.
///
/// The cross terms make `H` non-separable, which exercises the claim that
/// only diagonal second partials enter the matrix Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialObjective {
    pub linear: Vec<f64>,
    pub quadratic: Vec<f64>,
    /// Row-major `p × p`; only entries with `k < l` are read.
    pub cross: Vec<f64>,
}

impl PolynomialObjective {
    pub fn new(linear: Vec<f64>, quadratic: Vec<f64>, cross: Vec<f64>) -> Self {
        let p = linear.len();
        assert_eq!(quadratic.len(), p, "quadratic coefficients must have length p");
        assert_eq!(cross.len(), p * p, "cross coefficients must be p x p");
        Self {
            linear,
            quadratic,
            cross,
        }
    }

    fn p(&self) -> usize {
        self.linear.len()
    }

    fn cross_at(&self, k: usize, l: usize) -> f64 {
        let (a, b) = if k < l { (k, l) } else { (l, k) };
        self.cross[a * self.p() + b]
    }
}

impl InvariantObjective for PolynomialObjective {
    fn label(&self) -> String {
        "polynomial".into()
    }

    fn value(&self, lambda: &[f64]) -> f64 {
        let p = self.p();
        let mut v = 0.0;
        for k in 0..p {
            v += self.linear[k] * lambda[k] + self.quadratic[k] * lambda[k] * lambda[k];
            for l in (k + 1)..p {
                v += self.cross_at(k, l) * lambda[k] * lambda[l];
            }
        }
        v
    }

    fn grad(&self, lambda: &[f64]) -> Vec<f64> {
        let p = self.p();
        (0..p)
            .map(|k| {
                let mut g = self.linear[k] + 2.0 * self.quadratic[k] * lambda[k];
                for l in (0..p).filter(|&l| l != k) {
                    g += self.cross_at(k, l) * lambda[l];
                }
                g
            })
            .collect()
    }

    fn hess_diag(&self, _lambda: &[f64]) -> Vec<f64> {
        self.quadratic.iter().map(|b| 2.0 * b).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central differences of `value` along each coordinate of `λ`.
    fn fd_lambda(obj: &dyn InvariantObjective, lambda: &[f64], k: usize, h: f64) -> (f64, f64) {
        let mut up = lambda.to_vec();
        let mut dn = lambda.to_vec();
        up[k] += h;
        dn[k] -= h;
        let (fu, f0, fd) = (obj.value(&up), obj.value(lambda), obj.value(&dn));
        ((fu - fd) / (2.0 * h), (fu - 2.0 * f0 + fd) / (h * h))
    }

    #[test]
    fn log_objective_hand_values() {
        let obj = LogObjective::new(vec![2.0, 0.0]);
        let lam = [std::f64::consts::E, 5.0];
        assert!((obj.value(&lam) + 1.0).abs() < 1e-15);
        let g = obj.grad(&lam);
        assert!((g[0] + 1.0 / std::f64::consts::E).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn polynomial_derivatives_match_fd() {
        let obj = PolynomialObjective::new(
            vec![0.3, -1.2, 0.7],
            vec![0.05, -0.02, 0.11],
            vec![0.0, 0.4, -0.3, 0.0, 0.0, 0.25, 0.0, 0.0, 0.0],
        );
        let lam = [7.5, 3.1, 0.9];
        let g = obj.grad(&lam);
        let h = obj.hess_diag(&lam);
        for k in 0..3 {
            let (g_fd, h_fd) = fd_lambda(&obj, &lam, k, 1e-4);
            assert!((g[k] - g_fd).abs() < 1e-7 * (1.0 + g[k].abs()));
            assert!((h[k] - h_fd).abs() < 1e-4 * (1.0 + h[k].abs()));
        }
    }
}
