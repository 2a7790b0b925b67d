//! Deterministic, parallel Monte Carlo estimation of the matrix quadratic
//! risk.
//!
//! Replication `r` of a run with master seed `s` draws from ChaCha8 stream
//! `r` keyed by `s`, so each replication owns an independent substream no
//! matter which worker executes it. Replications are grouped into fixed
//! blocks of [`BLOCK_SIZE`]; each block is summed in index order and the
//! block partials are reduced in block order. Output is therefore
//! bit-identical for any thread count.

pub mod presets;
#[doc(hidden)]
pub mod test_support;

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::InvariantObjective;
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::risk::sure_for_estimator;
use crate::spectral::{gram_spectral, symmetric_eigen_desc, symmetrize, ProblemDims};
use crate::Mat;

/// Replications per reduction block.
pub const BLOCK_SIZE: usize = 1024;
/// Default replication count per grid point.
pub const DEFAULT_REPS: usize = 100_000;
/// Maximum tolerated fraction of rejected draws.
pub const MAX_REJECT_RATE: f64 = 0.01;
const MAX_ATTEMPTS_PER_REP: u64 = 1000;

/// Mean matrix specified through its singular values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSpec {
    pub dims: ProblemDims,
    pub singular_values: Vec<f64>,
}

impl MeanSpec {
    pub fn new(dims: ProblemDims, singular_values: Vec<f64>) -> Result<Self> {
        if singular_values.len() != dims.p {
            return Err(Error::Shape {
                expected: format!("{} singular values", dims.p),
                got: singular_values.len().to_string(),
            });
        }
        if singular_values.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Config("singular values of M must be finite and >= 0".into()));
        }
        if singular_values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Config("singular values of M must be in descending order".into()));
        }
        Ok(Self { dims, singular_values })
    }

    /// Sorts `singular_values` descending before validating.
    pub fn sorted(dims: ProblemDims, mut singular_values: Vec<f64>) -> Result<Self> {
        singular_values.sort_by(|a, b| b.total_cmp(a));
        Self::new(dims, singular_values)
    }
}

/// `M` with `M_kk = σ_k(M)` and zeros elsewhere. Risk eigenvalues and trace
/// depend on `M` only through its singular values, so the diagonal
/// embedding loses nothing.
pub fn mean_from_singular_values(spec: &MeanSpec) -> Mat {
    let ProblemDims { n, p } = spec.dims;
    Mat::from_fn(n, p, |r, c| if r == c { spec.singular_values[c] } else { 0.0 })
}

/// The substream for one replication.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `X = M + Z`, `Z` with independent standard normal entries (filled
/// column-major).
pub fn sample_observation<R: Rng + ?Sized>(m: &Mat, rng: &mut R) -> Mat {
    let mut x = m.clone();
    for v in x.iter_mut() {
        *v += rng.sample::<f64, _>(StandardNormal);
    }
    x
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

/// Seed for one `(grid point, estimator)` cell of a sweep:
/// `seed ⊕ mix(point, label)`.
pub fn derive_seed(seed: u64, point: u64, label: &str) -> u64 {
    seed ^ splitmix64(splitmix64(point) ^ fnv1a(label.as_bytes()))
}

/// Running first and second moments of a feature vector.
#[derive(Debug, Clone)]
struct Moments {
    count: u64,
    rejects: u64,
    sum: Vec<f64>,
    /// Upper-triangular packed sums of products, or only squares when
    /// `full` is false.
    prod: Vec<f64>,
    full: bool,
}

impl Moments {
    fn new(dim: usize, full: bool) -> Self {
        let prod_len = if full { dim * (dim + 1) / 2 } else { dim };
        Self {
            count: 0,
            rejects: 0,
            sum: vec![0.0; dim],
            prod: vec![0.0; prod_len],
            full,
        }
    }

    fn push(&mut self, f: &[f64]) {
        self.count += 1;
        for (s, v) in self.sum.iter_mut().zip(f) {
            *s += v;
        }
        if self.full {
            let mut idx = 0;
            for i in 0..f.len() {
                let fi = f[i];
                for fj in &f[i..] {
                    self.prod[idx] += fi * fj;
                    idx += 1;
                }
            }
        } else {
            for (s, v) in self.prod.iter_mut().zip(f) {
                *s += v * v;
            }
        }
    }

    fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.rejects += other.rejects;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.prod.iter_mut().zip(&other.prod) {
            *a += b;
        }
    }

    fn mean(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    fn packed_index(dim: usize, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * (2 * dim - i + 1) / 2 + (j - i)
    }

    /// Sample covariance of features `i` and `j`.
    fn cov(&self, i: usize, j: usize) -> f64 {
        let n = self.count as f64;
        let dim = self.sum.len();
        let prod = if self.full {
            self.prod[Self::packed_index(dim, i, j)]
        } else {
            assert_eq!(i, j, "cross moments were not accumulated");
            self.prod[i]
        };
        (prod - self.sum[i] * self.sum[j] / n) / (n - 1.0)
    }

    /// Standard error of the mean of `Σ coef_i f_i`.
    fn linear_se(&self, coef: &[f64]) -> f64 {
        let mut var = 0.0;
        for (i, ci) in coef.iter().enumerate().filter(|(_, c)| **c != 0.0) {
            for (j, cj) in coef.iter().enumerate().filter(|(_, c)| **c != 0.0) {
                var += ci * cj * self.cov(i, j);
            }
        }
        (var.max(0.0) / self.count as f64).sqrt()
    }
}

/// Index pairs `(i, j)`, `i <= j`, of the packed upper triangle of a `p × p`
/// symmetric matrix.
fn vech_pairs(p: usize) -> Vec<(usize, usize)> {
    (0..p).flat_map(|i| (i..p).map(move |j| (i, j))).collect()
}

fn vech(a: &Mat, pairs: &[(usize, usize)], out: &mut Vec<f64>) {
    out.extend(pairs.iter().map(|&(i, j)| 0.5 * (a[(i, j)] + a[(j, i)])));
}

fn unvech(values: &[f64], p: usize, pairs: &[(usize, usize)]) -> Mat {
    let mut m = Mat::zeros(p, p);
    for (&(i, j), &v) in pairs.iter().zip(values) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    m
}

/// Runs `draw` on `reps` independent observations `X = M + Z` and
/// accumulates the returned feature vectors in a thread-count-independent
/// order. A draw for which `draw` errors is rejected and replaced by the
/// next sample from the same substream.
fn accumulate<F>(m: &Mat, reps: usize, seed: u64, dim: usize, full: bool, draw: F) -> Result<Moments>
where
    F: Fn(&Mat, &mut Vec<f64>) -> Result<()> + Sync,
{
    if reps < 2 {
        return Err(Error::Config(format!("need at least 2 replications, got {reps}")));
    }
    let blocks = reps.div_ceil(BLOCK_SIZE);
    let partials: Vec<Result<Moments>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = Moments::new(dim, full);
            let mut features = Vec::with_capacity(dim);
            for r in (b * BLOCK_SIZE)..((b + 1) * BLOCK_SIZE).min(reps) {
                let mut rng = stream_rng(seed, r as u64);
                let mut attempts = 0;
                loop {
                    let x = sample_observation(m, &mut rng);
                    features.clear();
                    match draw(&x, &mut features) {
                        Ok(()) => break,
                        Err(e) => {
                            acc.rejects += 1;
                            attempts += 1;
                            if attempts >= MAX_ATTEMPTS_PER_REP {
                                return Err(e);
                            }
                        }
                    }
                }
                acc.push(&features);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Moments::new(dim, full);
    for part in partials {
        total.merge(&part?);
    }
    if total.rejects as f64 > MAX_REJECT_RATE * reps as f64 {
        return Err(Error::TooManyRejections {
            rejects: total.rejects,
            reps,
        });
    }
    Ok(total)
}

/// Monte Carlo estimate of `E (M̂ − M)ᵀ(M̂ − M)` and its summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRiskEstimate {
    #[serde(with = "crate::output::mat_rows")]
    pub mean: Mat,
    #[serde(with = "crate::output::mat_rows")]
    pub stderr: Mat,
    /// Eigenvalues of `mean`, descending.
    pub eigenvalues: Vec<f64>,
    /// Standard-error proxy for each eigenvalue: the standard error of the
    /// quadratic form `w_kᵀ L w_k` at the fixed eigenvector `w_k` of `mean`.
    pub eigenvalue_se_proxy: Vec<f64>,
    pub frobenius: f64,
    pub frobenius_stderr: f64,
    pub reps: usize,
    pub seed: u64,
    pub rejects: u64,
}

impl MatrixRiskEstimate {
    pub fn largest_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// Monte Carlo matrix quadratic risk of `est` at the mean described by `spec`.
pub fn mc_matrix_risk(spec: &MeanSpec, est: &EstimatorSpec, reps: usize, seed: u64) -> Result<MatrixRiskEstimate> {
    let m = mean_from_singular_values(spec);
    mc_matrix_risk_at(&m, est, reps, seed)
}

/// As [`mc_matrix_risk`] for an arbitrary mean matrix.
pub fn mc_matrix_risk_at(m: &Mat, est: &EstimatorSpec, reps: usize, seed: u64) -> Result<MatrixRiskEstimate> {
    let dims = ProblemDims::of(m)?;
    let p = dims.p;
    let pairs = vech_pairs(p);
    let moments = accumulate(m, reps, seed, pairs.len(), true, |x, out| {
        let sp = gram_spectral(x)?;
        let err = est.apply_at(x, &sp)? - m;
        let loss = err.transpose() * err;
        if loss.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("loss"));
        }
        vech(&loss, &pairs, out);
        Ok(())
    })?;
    Ok(summarize(&moments, p, &pairs, reps, seed))
}

fn summarize(moments: &Moments, p: usize, pairs: &[(usize, usize)], reps: usize, seed: u64) -> MatrixRiskEstimate {
    let mut mean = unvech(&moments.mean(), p, pairs);
    symmetrize(&mut mean);
    let se: Vec<f64> = (0..pairs.len())
        .map(|i| (moments.cov(i, i).max(0.0) / moments.count as f64).sqrt())
        .collect();
    let stderr = unvech(&se, p, pairs);

    let eig = symmetric_eigen_desc(&mean);
    let eigenvalues = eig.0;
    let eigenvalue_se_proxy = (0..p)
        .map(|k| {
            let w = eig.1.column(k);
            let coef: Vec<f64> = pairs
                .iter()
                .map(|&(i, j)| if i == j { w[i] * w[i] } else { 2.0 * w[i] * w[j] })
                .collect();
            moments.linear_se(&coef)
        })
        .collect();
    let trace_coef: Vec<f64> = pairs.iter().map(|&(i, j)| if i == j { 1.0 } else { 0.0 }).collect();
    MatrixRiskEstimate {
        frobenius: mean.trace(),
        frobenius_stderr: moments.linear_se(&trace_coef),
        mean,
        stderr,
        eigenvalues,
        eigenvalue_se_proxy,
        reps,
        seed,
        rejects: moments.rejects,
    }
}

/// Paired comparison of the realized loss and the analytic unbiased risk
/// estimate on the same draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SureAgreement {
    pub label: String,
    /// Mean of `loss − SURE` over draws.
    #[serde(with = "crate::output::mat_rows")]
    pub mean_difference: Mat,
    #[serde(with = "crate::output::mat_rows")]
    pub difference_stderr: Mat,
    #[serde(with = "crate::output::mat_rows")]
    pub mean_loss: Mat,
    #[serde(with = "crate::output::mat_rows")]
    pub mean_sure: Mat,
    /// `max |mean_difference| / difference_stderr` over entries.
    pub max_abs_z: f64,
    pub reps: usize,
    pub seed: u64,
    pub rejects: u64,
}

/// Paired agreement for the pseudo-Bayes estimator `X + ∇̃h(X)` of `obj`,
/// whose risk estimate comes from the general formula.
pub fn mc_sure_agreement(
    spec: &MeanSpec,
    obj: std::sync::Arc<dyn InvariantObjective>,
    reps: usize,
    seed: u64,
) -> Result<SureAgreement> {
    mc_sure_agreement_for(spec, &EstimatorSpec::pseudo_bayes(obj), reps, seed)
}

/// Paired agreement for any estimator with an analytic risk estimate.
/// Draws with a degenerate spectrum are rejected and redrawn.
pub fn mc_sure_agreement_for(spec: &MeanSpec, est: &EstimatorSpec, reps: usize, seed: u64) -> Result<SureAgreement> {
    if !est.has_analytic_sure() {
        return Err(Error::NoAnalyticRisk(est.label.clone()));
    }
    let dims = spec.dims;
    let p = dims.p;
    let m = mean_from_singular_values(spec);
    let pairs = vech_pairs(p);
    let q = pairs.len();
    let moments = accumulate(&m, reps, seed, 3 * q, false, |x, out| {
        let sp = gram_spectral(x)?;
        sp.require_distinct()?;
        let err = est.apply_at(x, &sp)? - &m;
        let loss = err.transpose() * err;
        let sure = sure_for_estimator(&sp, est, dims)?.entries;
        if loss.iter().chain(sure.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("loss"));
        }
        vech(&(&loss - &sure), &pairs, out);
        vech(&loss, &pairs, out);
        vech(&sure, &pairs, out);
        Ok(())
    })?;
    let mean = moments.mean();
    let se: Vec<f64> = (0..q)
        .map(|i| (moments.cov(i, i).max(0.0) / moments.count as f64).sqrt())
        .collect();
    let max_abs_z = (0..q)
        .map(|i| if se[i] > 0.0 { mean[i].abs() / se[i] } else if mean[i] == 0.0 { 0.0 } else { f64::INFINITY })
        .fold(0.0, f64::max);
    Ok(SureAgreement {
        label: est.label.clone(),
        mean_difference: unvech(&mean[..q], p, &pairs),
        difference_stderr: unvech(&se, p, &pairs),
        mean_loss: unvech(&mean[q..2 * q], p, &pairs),
        mean_sure: unvech(&mean[2 * q..], p, &pairs),
        max_abs_z,
        reps,
        seed,
        rejects: moments.rejects,
    })
}

/// Evenly spaced grid `start, start + step, …` up to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        if self.step <= 0.0 || self.stop < self.start {
            return vec![self.start];
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.start + i as f64 * self.step).collect()
    }
}

/// A one-dimensional sweep over one singular value of `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub dims: ProblemDims,
    pub estimators: Vec<String>,
    /// 0-based index of the singular value that varies.
    pub axis: usize,
    /// Singular values of `M`; the entry at `axis` is replaced by each grid value.
    pub fixed: Vec<f64>,
    pub grid: Grid,
    pub reps: usize,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(Error::Config("sweep needs at least one estimator".into()));
        }
        if self.axis >= self.dims.p {
            return Err(Error::IndexOutOfRange {
                index: self.axis,
                len: self.dims.p,
            });
        }
        if self.fixed.len() != self.dims.p {
            return Err(Error::Shape {
                expected: format!("{} fixed singular values", self.dims.p),
                got: self.fixed.len().to_string(),
            });
        }
        if !(self.grid.start.is_finite() && self.grid.stop.is_finite() && self.grid.step.is_finite()) {
            return Err(Error::Config("grid bounds must be finite".into()));
        }
        if self.grid.step <= 0.0 && self.grid.stop != self.grid.start {
            return Err(Error::Config("grid step must be positive".into()));
        }
        for label in &self.estimators {
            EstimatorSpec::from_label(label, self.dims)?;
        }
        for v in self.grid.values() {
            self.mean_at(v)?;
        }
        Ok(())
    }

    /// Mean spec at one grid value, singular values re-sorted descending.
    pub fn mean_at(&self, value: f64) -> Result<MeanSpec> {
        let mut sv = self.fixed.clone();
        sv[self.axis] = value;
        MeanSpec::sorted(self.dims, sv)
    }
}

/// One `(grid value, estimator)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub estimator: String,
    pub estimate: MatrixRiskEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub dims: ProblemDims,
    pub rows: Vec<SweepRow>,
}

/// Runs every grid point for every estimator; cell `(i, label)` uses seed
/// [`derive_seed`]`(spec.seed, i, label)`.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    let estimators = spec
        .estimators
        .iter()
        .map(|l| EstimatorSpec::from_label(l, spec.dims))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (i, value) in spec.grid.values().into_iter().enumerate() {
        let mean = spec.mean_at(value)?;
        for est in &estimators {
            let seed = derive_seed(spec.seed, i as u64, &est.label);
            let estimate = mc_matrix_risk(&mean, est, spec.reps, seed)?;
            rows.push(SweepRow {
                sweep_value: value,
                estimator: est.label.clone(),
                estimate,
            });
        }
    }
    Ok(SweepTable { dims: spec.dims, rows })
}

/// Largest risk eigenvalue of Stein's estimator at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixRow {
    pub n: usize,
    pub p: usize,
    /// `None` when Stein's coefficients are undefined (`n < p + 1`).
    pub largest_eigenvalue: Option<f64>,
    pub eigenvalue_se_proxy: Option<f64>,
    /// Largest eigenvalue below `n`, i.e. no worse than the MLE along any direction.
    pub below_n: bool,
    /// `n >= p + 2`; rows outside this range are reported, not dropped.
    pub admissible: bool,
    pub reps: usize,
    pub seed: u64,
    pub rejects: u64,
}

/// Sweep over `n` of the largest risk eigenvalue of Stein's estimator with
/// every singular value of `M` equal to `sigma`.
pub fn appendix_sweep(p: usize, n_range: RangeInclusive<usize>, sigma: f64, reps: usize, seed: u64) -> Result<Vec<AppendixRow>> {
    if n_range.is_empty() {
        return Err(Error::Config("empty n range".into()));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Config(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let mut rows = Vec::new();
    for n in n_range {
        let row_seed = derive_seed(seed, n as u64, "stein");
        let admissible = n >= p + 2;
        let estimate = ProblemDims::new(n, p).and_then(|dims| {
            let est = EstimatorSpec::from_label("stein", dims)?;
            let mean = MeanSpec::new(dims, vec![sigma; p])?;
            mc_matrix_risk(&mean, &est, reps, row_seed)
        });
        let row = match estimate {
            Ok(e) => AppendixRow {
                n,
                p,
                largest_eigenvalue: Some(e.largest_eigenvalue()),
                eigenvalue_se_proxy: Some(e.eigenvalue_se_proxy[0]),
                below_n: e.largest_eigenvalue() < n as f64,
                admissible,
                reps,
                seed: row_seed,
                rejects: e.rejects,
            },
            Err(Error::InvalidDims(_)) => AppendixRow {
                n,
                p,
                largest_eigenvalue: None,
                eigenvalue_se_proxy: None,
                below_n: false,
                admissible: false,
                reps,
                seed: row_seed,
                rejects: 0,
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    Ok(rows)
}
