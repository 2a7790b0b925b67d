//! Identity and finite-difference verification suite.
//!
//! Two groups of checks on random Gaussian observations:
//!
//! * derivative checks: every closed-form derivative against a
//!   finite-difference oracle (draws with a relative eigen-gap below
//!   [`FD_GAP_TOL`] are redrawn, since finite-difference steps could cross
//!   an eigenvalue ordering there),
//! * identity checks: algebraically equivalent formulas evaluated by
//!   different routes must agree to [`IDENTITY_TOL`].

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::fd::{fd_gradient, fd_matrix_laplacian, FIRST_ORDER_STEP, SECOND_ORDER_STEP};
use crate::calculus::{
    gradient_gram, invariant_value, lambda_gradient, lambda_pair_identity, matrix_gradient_invariant,
    matrix_laplacian_invariant, projector_jacobian, scalar_laplacian_invariant, InvariantObjective, LogObjective,
    PolynomialObjective,
};
use crate::estimators::{log_objective, pseudo_bayes, spectral_shrinkage, stein_coeffs, ShrinkageCoefficients};
use crate::montecarlo::stream_rng;
use crate::montecarlo::test_support::{gaussian_matrix, random_orthogonal};
use crate::risk::{
    stein_diagonal, sure_frobenius, sure_frobenius_pairwise, sure_matrix_by_parts,
    sure_matrix_general, sure_matrix_shrinkage, sure_matrix_stein,
};
use crate::spectral::{eigen_gap_check, gram_spectral, symmetric_eigenvalues_desc, ProblemDims};
use crate::Mat;

/// Relative tolerance for first-derivative checks.
pub const FD_FIRST_REL_TOL: f64 = 1e-5;
/// Absolute tolerance for the projector Jacobian check.
pub const FD_PROJECTOR_ABS_TOL: f64 = 1e-4;
/// Absolute tolerance for second-derivative checks.
pub const FD_SECOND_ABS_TOL: f64 = 1e-3;
/// Relative tolerance for algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Relative eigen-gap below which finite-difference draws are redrawn.
pub const FD_GAP_TOL: f64 = 1e-4;
/// Tolerance on the nonpositivity of Stein's risk diagonal.
pub const CERTIFICATE_TOL: f64 = 1e-12;

pub const DERIVATIVE_CHECKS: [&str; 4] = [
    "lambda-gradient-fd",
    "projector-jacobian-fd",
    "matrix-gradient-fd",
    "matrix-laplacian-fd",
];

pub const IDENTITY_CHECKS: [&str; 10] = [
    "lambda-pair-identity",
    "gradient-gram",
    "laplacian-trace",
    "general-risk-assembly",
    "shrinkage-risk-vs-general",
    "stein-risk-vs-shrinkage",
    "frobenius-forms",
    "log-objective-is-shrinkage",
    "efron-morris-risk-closed-form",
    "stein-domination-certificate",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub dims: ProblemDims,
    /// Random observations per derivative check.
    pub fd_trials: usize,
    /// Random inputs per identity check.
    pub identity_trials: usize,
    pub seed: u64,
    /// Name of a check whose analytic side is deliberately corrupted.
    /// Exercises the failure path of the suite.
    pub fault: Option<String>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            dims: ProblemDims { n: 10, p: 3 },
            fd_trials: 100,
            identity_trials: 10_000,
            seed: 42,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &str, max_error: f64, tolerance: f64, samples: usize) -> Self {
        Self {
            name: name.to_string(),
            max_error,
            tolerance,
            samples,
            passed: max_error.is_finite() && max_error <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub dims: ProblemDims,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `max |a − b| / max(max |a|, max |b|)`.
pub fn rel_err(a: &Mat, b: &Mat) -> f64 {
    let scale = max_abs(a).max(max_abs(b)).max(f64::MIN_POSITIVE);
    max_abs(&(a - b)) / scale
}

/// `max |a − b|` relative to `scale`, for results formed as a sum of terms
/// that may cancel; `scale` is the size of the largest term.
fn err_at_scale(a: &Mat, b: &Mat, scale: f64) -> f64 {
    max_abs(&(a - b)) / scale.max(f64::MIN_POSITIVE)
}

/// Sum of the absolute values of the terms of the scalar Laplacian
/// `4 Σ λ_k H_kk + 2 Σ (n − p + 1 + 2 λ_k Σ_l 1/(λ_k − λ_l)) H_k`; the pairwise
/// terms cancel between `k` and `l` when two eigenvalues are close.
fn scalar_laplacian_scale(x: &Mat, obj: &dyn InvariantObjective, n: usize) -> f64 {
    let sp = gram_spectral(x).expect("finite draw");
    let lam = sp.lambda();
    let p = lam.len();
    let g = obj.grad(lam);
    let h = obj.hess_diag(lam);
    let mut total = 0.0;
    for k in 0..p {
        total += (4.0 * lam[k] * h[k]).abs() + (2.0 * (n as f64 - p as f64 + 1.0) * g[k]).abs();
        for l in (0..p).filter(|&l| l != k) {
            total += (4.0 * lam[k] * g[k] / (lam[k] - lam[l])).abs();
        }
    }
    total
}

fn rel_err_scalar(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

struct Suite<'a> {
    cfg: &'a VerifyConfig,
}

impl Suite<'_> {
    fn rng(&self, check: &str) -> ChaCha8Rng {
        let idx = DERIVATIVE_CHECKS
            .iter()
            .chain(IDENTITY_CHECKS.iter())
            .position(|c| *c == check)
            .expect("registered check") as u64;
        stream_rng(self.cfg.seed, idx)
    }

    fn corrupt(&self, check: &str, m: Mat) -> Mat {
        if self.cfg.fault.as_deref() == Some(check) {
            let bump = 1e-2 * max_abs(&m).max(1.0);
            m.add_scalar(bump)
        } else {
            m
        }
    }

    fn corrupt_scalar(&self, check: &str, v: f64) -> f64 {
        if self.cfg.fault.as_deref() == Some(check) {
            v + 1e-2 * v.abs().max(1.0)
        } else {
            v
        }
    }

    /// Gaussian observation whose Gram spectrum passes the gap check at `tol`.
    fn draw(&self, rng: &mut ChaCha8Rng, tol: f64) -> Mat {
        let ProblemDims { n, p } = self.cfg.dims;
        loop {
            let x = gaussian_matrix(rng, n, p);
            if let Ok(sp) = gram_spectral(&x) {
                if eigen_gap_check(sp.lambda(), tol).is_ok() {
                    return x;
                }
            }
        }
    }

    fn dims(&self) -> ProblemDims {
        self.cfg.dims
    }

    fn em_like(&self) -> ShrinkageCoefficients {
        let ProblemDims { n, p } = self.dims();
        ShrinkageCoefficients::new(vec![(n as f64 - p as f64 - 1.0).max(1.0); p]).expect("valid")
    }

    fn stein_like(&self) -> ShrinkageCoefficients {
        let ProblemDims { n, p } = self.dims();
        ShrinkageCoefficients::new(
            (1..=p)
                .map(|k| (n as f64 + p as f64 - 2.0 * k as f64 - 1.0).max(0.5))
                .collect(),
        )
        .expect("valid")
    }

    fn random_polynomial(&self, rng: &mut ChaCha8Rng) -> PolynomialObjective {
        let p = self.dims().p;
        PolynomialObjective::new(
            (0..p).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..p).map(|_| rng.random_range(-0.1..0.1)).collect(),
            (0..p * p).map(|_| rng.random_range(-0.1..0.1)).collect(),
        )
    }

    fn random_coefficients(&self, rng: &mut ChaCha8Rng) -> ShrinkageCoefficients {
        let ProblemDims { n, p } = self.dims();
        ShrinkageCoefficients::new((0..p).map(|_| rng.random_range(0.0..2.0 * n as f64)).collect()).expect("valid")
    }

    fn fd_objectives(&self, rng: &mut ChaCha8Rng) -> Vec<Arc<dyn InvariantObjective>> {
        vec![
            Arc::new(log_objective(&self.em_like())),
            Arc::new(log_objective(&self.stein_like())),
            Arc::new(LogObjective::log_det(self.dims().p)),
            Arc::new(self.random_polynomial(rng)),
        ]
    }

    fn lambda_gradient_fd(&self) -> CheckResult {
        let name = "lambda-gradient-fd";
        let mut rng = self.rng(name);
        let p = self.dims().p;
        let mut worst: f64 = 0.0;
        for _ in 0..self.cfg.fd_trials {
            let x = self.draw(&mut rng, FD_GAP_TOL);
            let sp = gram_spectral(&x).expect("finite draw");
            for i in 0..p {
                let analytic = self.corrupt(name, lambda_gradient(&x, &sp, i).expect("index"));
                let oracle = fd_gradient(&x, |m: &Mat| gram_spectral(m).map_or(f64::NAN, |s| s.lambda()[i]), FIRST_ORDER_STEP);
                worst = worst.max(oracle.map_or(f64::INFINITY, |o| rel_err(&analytic, &o)));
            }
        }
        CheckResult::new(name, worst, FD_FIRST_REL_TOL, self.cfg.fd_trials)
    }

    fn projector_jacobian_fd(&self) -> CheckResult {
        let name = "projector-jacobian-fd";
        let mut rng = self.rng(name);
        let ProblemDims { n, p } = self.dims();
        let h = FIRST_ORDER_STEP;
        let mut worst: f64 = 0.0;
        for _ in 0..self.cfg.fd_trials {
            let x = self.draw(&mut rng, FD_GAP_TOL);
            let sp = gram_spectral(&x).expect("finite draw");
            let mut work = x.clone();
            for a in 0..n {
                for k in 0..p {
                    let orig = x[(a, k)];
                    work[(a, k)] = orig + h;
                    let up = gram_spectral(&work).expect("finite");
                    work[(a, k)] = orig - h;
                    let dn = gram_spectral(&work).expect("finite");
                    work[(a, k)] = orig;
                    for j in 0..p {
                        let oracle = (up.projector(j) - dn.projector(j)) / (2.0 * h);
                        let analytic = self.corrupt(name, projector_jacobian(&x, &sp, j, a, k).expect("distinct"));
                        worst = worst.max(max_abs(&(analytic - oracle)));
                    }
                }
            }
        }
        CheckResult::new(name, worst, FD_PROJECTOR_ABS_TOL, self.cfg.fd_trials)
    }

    fn matrix_gradient_fd(&self) -> CheckResult {
        let name = "matrix-gradient-fd";
        let mut rng = self.rng(name);
        let mut worst: f64 = 0.0;
        for _ in 0..self.cfg.fd_trials {
            let x = self.draw(&mut rng, FD_GAP_TOL);
            for obj in self.fd_objectives(&mut rng) {
                let analytic = self.corrupt(name, matrix_gradient_invariant(&x, obj.as_ref()).expect("regular"));
                let oracle = fd_gradient(&x, |m: &Mat| invariant_value(m, obj.as_ref()).unwrap_or(f64::NAN), FIRST_ORDER_STEP);
                worst = worst.max(oracle.map_or(f64::INFINITY, |o| rel_err(&analytic, &o)));
            }
        }
        CheckResult::new(name, worst, FD_FIRST_REL_TOL, self.cfg.fd_trials)
    }

    fn matrix_laplacian_fd(&self) -> CheckResult {
        let name = "matrix-laplacian-fd";
        let mut rng = self.rng(name);
        let mut worst: f64 = 0.0;
        let objectives: Vec<Arc<dyn InvariantObjective>> = vec![
            Arc::new(log_objective(&self.em_like())),
            Arc::new(LogObjective::log_det(self.dims().p)),
        ];
        for _ in 0..self.cfg.fd_trials {
            let x = self.draw(&mut rng, FD_GAP_TOL);
            for obj in &objectives {
                let analytic = self.corrupt(name, matrix_laplacian_invariant(&x, obj.as_ref()).expect("regular"));
                let oracle = fd_matrix_laplacian(&x, |m: &Mat| invariant_value(m, obj.as_ref()).unwrap_or(f64::NAN), SECOND_ORDER_STEP);
                worst = worst.max(oracle.map_or(f64::INFINITY, |o| max_abs(&(analytic - o))));
            }
        }
        CheckResult::new(name, worst, FD_SECOND_ABS_TOL, self.cfg.fd_trials)
    }

    fn identity_loop(&self, name: &str, mut f: impl FnMut(&mut ChaCha8Rng, &Mat) -> f64) -> CheckResult {
        let mut rng = self.rng(name);
        let mut worst: f64 = 0.0;
        for _ in 0..self.cfg.identity_trials {
            let x = self.draw(&mut rng, crate::spectral::DEFAULT_GAP_TOL);
            worst = worst.max(f(&mut rng, &x));
        }
        CheckResult::new(name, worst, IDENTITY_TOL, self.cfg.identity_trials)
    }

    fn lambda_pair(&self) -> CheckResult {
        let name = "lambda-pair-identity";
        let mut rng = self.rng(name);
        let mut worst: f64 = 0.0;
        for t in 0..self.cfg.identity_trials {
            let p = 2 + t % 9;
            let x = gaussian_matrix(&mut rng, p + 2 + t % 5, p);
            let lam = gram_spectral(&x).expect("finite draw").eigenvalues;
            if !eigen_gap_check(lam.as_slice(), crate::spectral::DEFAULT_GAP_TOL).is_ok() {
                continue;
            }
            let (lhs, rhs) = lambda_pair_identity(lam.as_slice()).expect("distinct");
            let lhs = self.corrupt(name, Mat::from_row_slice(1, p, &lhs));
            worst = worst.max(rel_err(&lhs, &Mat::from_row_slice(1, p, &rhs)));
        }
        CheckResult::new(name, worst, IDENTITY_TOL, self.cfg.identity_trials)
    }

    fn identity_checks(&self) -> Vec<CheckResult> {
        let dims = self.dims();
        let mut out = vec![self.lambda_pair()];

        out.push(self.identity_loop("gradient-gram", |rng, x| {
            let objs: [Arc<dyn InvariantObjective>; 3] = [
                Arc::new(self.random_polynomial(rng)),
                Arc::new(log_objective(&self.random_coefficients(rng))),
                Arc::new(log_objective(&self.em_like())),
            ];
            objs.iter()
                .map(|obj| {
                    let g = matrix_gradient_invariant(x, obj.as_ref()).expect("regular");
                    let gram = self.corrupt("gradient-gram", gradient_gram(x, obj.as_ref()).expect("regular"));
                    rel_err(&gram, &(g.transpose() * g))
                })
                .fold(0.0, f64::max)
        }));

        out.push(self.identity_loop("laplacian-trace", |rng, x| {
            let objs: [Arc<dyn InvariantObjective>; 2] =
                [Arc::new(self.random_polynomial(rng)), Arc::new(log_objective(&self.random_coefficients(rng)))];
            objs.iter()
                .map(|obj| {
                    let tr = matrix_laplacian_invariant(x, obj.as_ref()).expect("regular").trace();
                    let s = self.corrupt_scalar("laplacian-trace", scalar_laplacian_invariant(x, obj.as_ref()).expect("regular"));
                    (s - tr).abs() / scalar_laplacian_scale(x, obj.as_ref(), dims.n).max(s.abs()).max(tr.abs())
                })
                .fold(0.0, f64::max)
        }));

        out.push(self.identity_loop("general-risk-assembly", |rng, x| {
            let objs: [Arc<dyn InvariantObjective>; 2] =
                [Arc::new(self.random_polynomial(rng)), Arc::new(log_objective(&self.random_coefficients(rng)))];
            objs.iter()
                .map(|obj| {
                    let sure = self.corrupt(
                        "general-risk-assembly",
                        sure_matrix_general(x, obj.as_ref(), dims).expect("regular").entries,
                    );
                    rel_err(&sure, &sure_matrix_by_parts(x, obj.as_ref(), dims).expect("regular"))
                })
                .fold(0.0, f64::max)
        }));

        out.push(self.identity_loop("shrinkage-risk-vs-general", |rng, x| {
            let c = self.random_coefficients(rng);
            let shrink = self.corrupt(
                "shrinkage-risk-vs-general",
                sure_matrix_shrinkage(x, &c, dims).expect("regular").entries,
            );
            rel_err(&shrink, &sure_matrix_general(x, &log_objective(&c), dims).expect("regular").entries)
        }));

        if let Ok(stein) = stein_coeffs(dims) {
            out.push(self.identity_loop("stein-risk-vs-shrinkage", |_, x| {
                let s = self.corrupt("stein-risk-vs-shrinkage", sure_matrix_stein(x, dims).expect("regular").entries);
                rel_err(&s, &sure_matrix_shrinkage(x, &stein, dims).expect("regular").entries)
            }));
        }

        out.push(self.identity_loop("frobenius-forms", |rng, x| {
            let obj = self.random_polynomial(rng);
            let a = self.corrupt_scalar("frobenius-forms", sure_frobenius(x, &obj, dims).expect("regular"));
            let b = sure_frobenius_pairwise(x, &obj, dims).expect("regular");
            let t = sure_matrix_general(x, &obj, dims).expect("regular").trace();
            rel_err_scalar(a, b).max(rel_err_scalar(a, t))
        }));

        out.push(self.identity_loop("log-objective-is-shrinkage", |rng, x| {
            let c = self.random_coefficients(rng);
            let pb = self.corrupt("log-objective-is-shrinkage", pseudo_bayes(x, &log_objective(&c)).expect("regular"));
            let scale = max_abs(x).max(max_abs(&(&pb - x)));
            err_at_scale(&pb, &spectral_shrinkage(x, &c).expect("regular"), scale)
        }));

        if dims.n > dims.p + 1 {
            let em = crate::estimators::efron_morris_coeffs(dims).expect("n > p + 1");
            let c2 = (dims.nf() - dims.pf() - 1.0).powi(2);
            out.push(self.identity_loop("efron-morris-risk-closed-form", |_, x| {
                let inv = (x.transpose() * x).try_inverse().expect("full rank");
                let correction = inv * c2;
                let scale = dims.nf().max(max_abs(&correction));
                let closed = Mat::identity(dims.p, dims.p) * dims.nf() - correction;
                let s = self.corrupt(
                    "efron-morris-risk-closed-form",
                    sure_matrix_shrinkage(x, &em, dims).expect("regular").entries,
                );
                err_at_scale(&s, &closed, scale)
            }));
        }

        if dims.n + 1 >= 3 * dims.p {
            out.push(self.stein_certificate());
        }
        out
    }

    /// `D_kk <= 0` for Stein's coefficients on random descending spectra,
    /// and hence `SURE − n I ⪯ 0` for random eigenbases.
    fn stein_certificate(&self) -> CheckResult {
        let name = "stein-domination-certificate";
        let mut rng = self.rng(name);
        let ProblemDims { n, p } = self.dims();
        let mut worst = f64::NEG_INFINITY;
        for t in 0..self.cfg.identity_trials {
            let mut lam: Vec<f64> = if t % 2 == 0 {
                (0..p).map(|_| rng.random_range(1e-3..100.0)).collect()
            } else {
                gram_spectral(&gaussian_matrix(&mut rng, n, p)).expect("finite").lambda().to_vec()
            };
            lam.sort_by(|a, b| b.total_cmp(a));
            if !eigen_gap_check(&lam, crate::spectral::DEFAULT_GAP_TOL).is_ok() {
                continue;
            }
            let d = stein_diagonal(&lam, n);
            let mut dmax = d.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if self.cfg.fault.as_deref() == Some(name) {
                dmax = dmax.abs();
            }
            // Rotated back by a random eigenbasis, the excess over nI keeps
            // a nonpositive top eigenvalue up to roundoff.
            let q = random_orthogonal(&mut rng, p);
            let mut scaled = q.clone();
            for (k, mut col) in scaled.column_iter_mut().enumerate() {
                col *= d.0[k];
            }
            let excess = scaled * q.transpose();
            let scale = d.0.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            let top = symmetric_eigenvalues_desc(&excess)[0] / scale;
            worst = worst.max(dmax).max(top - 1e-10);
        }
        let mut r = CheckResult::new(name, worst, CERTIFICATE_TOL, self.cfg.identity_trials);
        r.passed = worst <= CERTIFICATE_TOL;
        r
    }
}

/// Derivative checks only.
pub fn run_derivative_checks(cfg: &VerifyConfig) -> Vec<CheckResult> {
    let s = Suite { cfg };
    vec![
        s.lambda_gradient_fd(),
        s.projector_jacobian_fd(),
        s.matrix_gradient_fd(),
        s.matrix_laplacian_fd(),
    ]
}

/// Identity checks only.
pub fn run_identity_checks(cfg: &VerifyConfig) -> Vec<CheckResult> {
    Suite { cfg }.identity_checks()
}

/// The full suite.
pub fn run_verify(cfg: &VerifyConfig) -> VerifyReport {
    let mut checks = run_derivative_checks(cfg);
    checks.extend(run_identity_checks(cfg));
    VerifyReport {
        dims: cfg.dims,
        seed: cfg.seed,
        checks,
    }
}
