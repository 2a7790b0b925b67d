//! Canonical decompositions of an `n × p` observation matrix.
//!
//! Eigenvalues and singular values are always returned in descending order,
//! with eigenvector / singular-vector columns permuted to match. Column signs
//! are left as the solver produces them; everything downstream only consumes
//! sign-invariant quantities (projectors `v vᵀ`, congruences `V D Vᵀ`).

use std::fmt;
use std::str::FromStr;

use nalgebra::{SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Mat, Vector};

/// Default relative tolerance for [`eigen_gap_check`].
pub const DEFAULT_GAP_TOL: f64 = 1e-8;
/// Absolute floor for the eigenvalue scale used by [`eigen_gap_check`].
pub const EPS_ABS: f64 = 1e-300;

/// Shape of the problem: `n` observations per column, `p` columns, `n >= p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemDims {
    pub n: usize,
    pub p: usize,
}

impl ProblemDims {
    pub fn new(n: usize, p: usize) -> Result<Self> {
        if p == 0 || n == 0 {
            return Err(Error::InvalidDims(format!("n = {n}, p = {p}: both must be >= 1")));
        }
        if n < p {
            return Err(Error::InvalidDims(format!("n = {n} < p = {p}: need a tall or square matrix")));
        }
        Ok(Self { n, p })
    }

    /// Dimensions of `x`, validated.
    pub fn of(x: &Mat) -> Result<Self> {
        Self::new(x.nrows(), x.ncols())
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    pub fn pf(&self) -> f64 {
        self.p as f64
    }

    pub(crate) fn expect_matrix(&self, x: &Mat) -> Result<()> {
        if x.nrows() != self.n || x.ncols() != self.p {
            return Err(Error::Shape {
                expected: format!("{}x{}", self.n, self.p),
                got: format!("{}x{}", x.nrows(), x.ncols()),
            });
        }
        Ok(())
    }
}

impl fmt::Display for ProblemDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.n, self.p)
    }
}

impl FromStr for ProblemDims {
    type Err = Error;

    /// Parses `"NxP"`, e.g. `"10x3"`.
    fn from_str(s: &str) -> Result<Self> {
        let (n, p) = s
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Config(format!("dims `{s}` must look like NxP")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("dims `{s}` must look like NxP")))
        };
        Self::new(parse(n)?, parse(p)?)
    }
}

/// Eigen-decomposition `XᵀX = V diag(λ) Vᵀ` with `λ` descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPair {
    pub eigenvalues: Vector,
    pub eigenvectors: Mat,
    pub gap_tolerance: f64,
    /// `X V` when the pair came from an SVD (`U diag(σ)`), which keeps the
    /// columns for small `σ` accurate to full relative precision.
    pub scores: Option<Mat>,
}

impl SpectralPair {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda(&self) -> &[f64] {
        self.eigenvalues.as_slice()
    }

    /// Projector `v_j v_jᵀ` onto the `j`-th eigenvector (0-based).
    pub fn projector(&self, j: usize) -> Mat {
        let v = self.eigenvectors.column(j);
        &v * v.transpose()
    }

    /// `V diag(d) Vᵀ`.
    pub fn congruence(&self, d: &[f64]) -> Mat {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= d[k];
        }
        let mut out = scaled * v.transpose();
        symmetrize(&mut out);
        out
    }

    /// `X V diag(d) Vᵀ`, using the stored scores when `x` produced this pair.
    pub fn right_congruence(&self, x: &Mat, d: &[f64]) -> Mat {
        let mut scaled = match &self.scores {
            Some(s) if s.shape() == x.shape() => s.clone(),
            _ => x * &self.eigenvectors,
        };
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= d[k];
        }
        scaled * self.eigenvectors.transpose()
    }

    /// Gap check at this pair's own tolerance.
    pub fn gap_check(&self) -> GapCheck {
        eigen_gap_check(self.lambda(), self.gap_tolerance)
    }

    /// Fails with a degeneracy error unless the gap check passes.
    pub fn require_distinct(&self) -> Result<()> {
        self.gap_check().into_result()
    }

    /// Fails only for tied eigenvalues; tolerates a zero smallest eigenvalue.
    pub fn require_distinct_pairs(&self) -> Result<()> {
        match self.gap_check() {
            GapCheck::Degenerate(k, l) => Err(Error::DegeneratePair(k, l)),
            _ => Ok(()),
        }
    }
}

/// Thin SVD `X = U diag(σ) Vᵀ` with `σ` descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriple {
    pub left: Mat,
    pub singular_values: Vector,
    pub right: Mat,
}

impl SvdTriple {
    /// `U diag(s) Vᵀ` for replacement singular values `s`.
    pub fn recompose(&self, s: &[f64]) -> Mat {
        let mut scaled = self.left.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= s[k];
        }
        scaled * self.right.transpose()
    }
}

/// Outcome of [`eigen_gap_check`]. Indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapCheck {
    Ok,
    /// Adjacent eigenvalues `(k, k + 1)` closer than the tolerance.
    Degenerate(usize, usize),
    /// The smallest eigenvalue (index `p - 1`) is numerically zero.
    ZeroSmallest(usize),
}

impl GapCheck {
    pub fn is_ok(&self) -> bool {
        matches!(self, GapCheck::Ok)
    }

    pub fn into_result(self) -> Result<()> {
        match self {
            GapCheck::Ok => Ok(()),
            GapCheck::Degenerate(k, l) => Err(Error::DegeneratePair(k, l)),
            GapCheck::ZeroSmallest(k) => Err(Error::ZeroEigenvalue(k)),
        }
    }
}

/// Checks that a descending spectrum has well-separated, positive entries
/// relative to `max(λ₁, EPS_ABS)`.
pub fn eigen_gap_check(lambda: &[f64], rel_tol: f64) -> GapCheck {
    let Some(&first) = lambda.first() else {
        return GapCheck::Ok;
    };
    let scale = first.max(EPS_ABS);
    for k in 0..lambda.len().saturating_sub(1) {
        if (lambda[k] - lambda[k + 1]) / scale <= rel_tol {
            return GapCheck::Degenerate(k, k + 1);
        }
    }
    let last = lambda.len() - 1;
    if lambda[last] / scale <= rel_tol {
        return GapCheck::ZeroSmallest(last);
    }
    GapCheck::Ok
}

pub(crate) fn check_finite(x: &Mat, what: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn symmetrize(a: &mut Mat) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Descending-order permutation of `values`.
fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

/// Spectral decomposition of `XᵀX`, eigenvalues descending.
///
/// Computed from the SVD of `X` (`λ = σ²`, right singular vectors) so that
/// small eigenvalues keep their relative accuracy; forming `XᵀX` first
/// would square the condition number.
pub fn gram_spectral(x: &Mat) -> Result<SpectralPair> {
    check_finite(x, "observation")?;
    if x.nrows() < x.ncols() {
        let mut gram = x.transpose() * x;
        symmetrize(&mut gram);
        return spectral_of_symmetric(gram);
    }
    let svd = thin_svd(x)?;
    let mut scores = svd.left;
    for (k, mut col) in scores.column_iter_mut().enumerate() {
        col *= svd.singular_values[k];
    }
    Ok(SpectralPair {
        eigenvalues: svd.singular_values.map(|s| s * s),
        eigenvectors: svd.right,
        gap_tolerance: DEFAULT_GAP_TOL,
        scores: Some(scores),
    })
}

/// Eigen-decomposition of a symmetric positive semidefinite matrix with the
/// same ordering and clamping conventions as [`gram_spectral`].
pub fn spectral_of_symmetric(gram: Mat) -> Result<SpectralPair> {
    let p = gram.nrows();
    let eig = SymmetricEigen::new(gram);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigenvalues"));
    }
    let order = descending_order(eig.eigenvalues.as_slice());
    // Roundoff can push a zero eigenvalue of a Gram matrix slightly negative.
    let eigenvalues = Vector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i].max(0.0)));
    let eigenvectors = Mat::from_fn(p, p, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SpectralPair {
        eigenvalues,
        eigenvectors,
        gap_tolerance: DEFAULT_GAP_TOL,
        scores: None,
    })
}

/// Eigenpairs of a symmetric matrix (no clamping), eigenvalues descending.
pub fn symmetric_eigen_desc(a: &Mat) -> (Vec<f64>, Mat) {
    let mut sym = a.clone();
    symmetrize(&mut sym);
    let p = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    let order = descending_order(eig.eigenvalues.as_slice());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Mat::from_fn(p, p, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Symmetric eigenvalues of `a`, descending.
pub fn symmetric_eigenvalues_desc(a: &Mat) -> Vector {
    let mut sym = a.clone();
    symmetrize(&mut sym);
    let mut vals: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    Vector::from_vec(vals)
}

/// Thin SVD of `X` (`n >= p`), singular values descending.
///
/// nalgebra's bidiagonal SVD supplies `V`; one-sided Jacobi sweeps on `X V`
/// then restore full accuracy (nalgebra alone reconstructs `X` only to about
/// `1e-10` relative when two singular values nearly coincide).
pub fn thin_svd(x: &Mat) -> Result<SvdTriple> {
    check_finite(x, "observation")?;
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::InvalidDims(format!("thin SVD needs n >= p, got {n}x{p}")));
    }
    let svd = SVD::try_new(x.clone(), true, true, f64::EPSILON, 0)
        .ok_or(Error::NonFinite("singular value decomposition"))?;
    let (u0, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::NonFinite("singular vectors")),
    };
    let mut v = vt.transpose();
    let mut w = x * &v;
    jacobi_orthogonalize(&mut w, &mut v);

    let norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    let order = descending_order(&norms);
    let floor = norms.iter().copied().fold(0.0, f64::max) * f64::EPSILON * n as f64;
    let singular_values = Vector::from_iterator(p, order.iter().map(|&i| norms[i]));
    let right = Mat::from_fn(p, p, |r, c| v[(r, order[c])]);
    let mut left = Mat::zeros(n, p);
    let mut zero_cols = Vec::new();
    for (c, &i) in order.iter().enumerate() {
        if norms[i] > floor {
            left.set_column(c, &(w.column(i) / norms[i]));
        } else {
            zero_cols.push(c);
        }
    }
    // Numerically zero directions: complete U with nalgebra's left vectors,
    // orthogonalized against the columns already set.
    let mut candidates = (0..u0.ncols()).collect::<Vec<_>>();
    candidates.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let mut filled: Vec<usize> = (0..p).filter(|c| !zero_cols.contains(c)).collect();
    for c in zero_cols {
        for &k in &candidates {
            let mut cand = u0.column(k).into_owned();
            for &f in &filled {
                let proj = left.column(f).dot(&cand);
                cand -= left.column(f) * proj;
            }
            let norm = cand.norm();
            if norm > 0.5 {
                left.set_column(c, &(cand / norm));
                filled.push(c);
                break;
            }
        }
    }
    Ok(SvdTriple {
        left,
        singular_values,
        right,
    })
}

/// One-sided Jacobi: rotates column pairs of `w` until mutually orthogonal,
/// applying the same rotations to `v`.
fn jacobi_orthogonalize(w: &mut Mat, v: &mut Mat) {
    let p = w.ncols();
    for _sweep in 0..30 {
        let mut rotated = false;
        for i in 0..p {
            for j in i + 1..p {
                let a = w.column(i).norm_squared();
                let b = w.column(j).norm_squared();
                let g = w.column(i).dot(&w.column(j));
                if g == 0.0 || g.abs() <= f64::EPSILON * (a * b).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(w, i, j, c, s);
                rotate_columns(v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
}

fn rotate_columns(m: &mut Mat, i: usize, j: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let (a, b) = (m[(r, i)], m[(r, j)]);
        m[(r, i)] = c * a - s * b;
        m[(r, j)] = s * a + c * b;
    }
}
