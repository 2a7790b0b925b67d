//! Python bindings. Matrices cross the boundary as lists of rows.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use orthoshrink::calculus::{matrix_gradient_invariant, matrix_laplacian_invariant};
use orthoshrink::montecarlo::{mc_matrix_risk, mc_sure_agreement_for, MeanSpec};
use orthoshrink::risk::{em_zero_mean_exact_risk, sure_for_estimator};
use orthoshrink::spectral::{gram_spectral, thin_svd};
use orthoshrink::verify::{run_verify, VerifyConfig};
use orthoshrink::{EstimatorSpec, Mat, ProblemDims};

fn err(e: orthoshrink::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_mat(rows: Vec<Vec<f64>>) -> PyResult<Mat> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n == 0 || p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("expected a non-empty rectangular list of rows"));
    }
    Ok(Mat::from_fn(n, p, |i, j| rows[i][j]))
}

fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Eigenvalues (descending) and eigenvectors (columns) of `XᵀX`.
#[pyfunction]
fn gram_eigen(x: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let sp = gram_spectral(&to_mat(x)?).map_err(err)?;
    Ok((sp.lambda().to_vec(), to_rows(&sp.eigenvectors)))
}

/// Singular values of `X`, descending.
#[pyfunction]
fn singular_values(x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    Ok(thin_svd(&to_mat(x)?).map_err(err)?.singular_values.iter().copied().collect())
}

/// Applies the estimator named by `label` to `x`.
#[pyfunction]
fn estimate(x: Vec<Vec<f64>>, label: &str) -> PyResult<Vec<Vec<f64>>> {
    let x = to_mat(x)?;
    let dims = ProblemDims::of(&x).map_err(err)?;
    let est = EstimatorSpec::from_label(label, dims).map_err(err)?;
    Ok(to_rows(&est.apply(&x).map_err(err)?))
}

/// Analytic unbiased estimate of the matrix quadratic risk of `label` at `x`.
#[pyfunction]
fn sure_matrix(x: Vec<Vec<f64>>, label: &str) -> PyResult<Vec<Vec<f64>>> {
    let x = to_mat(x)?;
    let dims = ProblemDims::of(&x).map_err(err)?;
    let est = EstimatorSpec::from_label(label, dims).map_err(err)?;
    let sp = gram_spectral(&x).map_err(err)?;
    Ok(to_rows(&sure_for_estimator(&sp, &est, dims).map_err(err)?.entries))
}

/// Matrix gradient of `−½ Σ c_k log λ_k` at `x`.
#[pyfunction]
fn log_objective_gradient(x: Vec<Vec<f64>>, c: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let x = to_mat(x)?;
    let obj = orthoshrink::LogObjective::new(c);
    Ok(to_rows(&matrix_gradient_invariant(&x, &obj).map_err(err)?))
}

/// Matrix Laplacian of `−½ Σ c_k log λ_k` at `x`.
#[pyfunction]
fn log_objective_laplacian(x: Vec<Vec<f64>>, c: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let x = to_mat(x)?;
    let obj = orthoshrink::LogObjective::new(c);
    Ok(to_rows(&matrix_laplacian_invariant(&x, &obj).map_err(err)?))
}

/// Exact risk matrix of the Efron–Morris estimator at `M = 0`.
#[pyfunction]
fn efron_morris_zero_mean_risk(n: usize, p: usize) -> PyResult<Vec<Vec<f64>>> {
    let dims = ProblemDims::new(n, p).map_err(err)?;
    Ok(to_rows(&em_zero_mean_exact_risk(dims).map_err(err)?))
}

#[pyclass(frozen, get_all)]
struct RiskEstimate {
    mean: Vec<Vec<f64>>,
    stderr: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    eigenvalue_se: Vec<f64>,
    frobenius: f64,
    frobenius_se: f64,
    reps: usize,
    seed: u64,
    rejects: u64,
}

#[pymethods]
impl RiskEstimate {
    fn __repr__(&self) -> String {
        format!(
            "RiskEstimate(frobenius={:.6}, frobenius_se={:.6}, eigenvalues={:?}, reps={})",
            self.frobenius, self.frobenius_se, self.eigenvalues, self.reps
        )
    }
}

/// Monte Carlo matrix risk of `label` at a mean with singular values `sigma`.
#[pyfunction]
#[pyo3(signature = (n, p, sigma, label, reps = 100_000, seed = 42))]
fn matrix_risk(py: Python<'_>, n: usize, p: usize, sigma: Vec<f64>, label: &str, reps: usize, seed: u64) -> PyResult<RiskEstimate> {
    let dims = ProblemDims::new(n, p).map_err(err)?;
    let est = EstimatorSpec::from_label(label, dims).map_err(err)?;
    let mean = MeanSpec::new(dims, sigma).map_err(err)?;
    let e = py.detach(|| mc_matrix_risk(&mean, &est, reps, seed)).map_err(err)?;
    Ok(RiskEstimate {
        mean: to_rows(&e.mean),
        stderr: to_rows(&e.stderr),
        eigenvalues: e.eigenvalues,
        eigenvalue_se: e.eigenvalue_se_proxy,
        frobenius: e.frobenius,
        frobenius_se: e.frobenius_stderr,
        reps: e.reps,
        seed: e.seed,
        rejects: e.rejects,
    })
}

/// Largest `|mean(loss − SURE)| / se` over entries, from paired draws.
#[pyfunction]
#[pyo3(signature = (n, p, sigma, label, reps = 100_000, seed = 42))]
fn sure_agreement_z(py: Python<'_>, n: usize, p: usize, sigma: Vec<f64>, label: &str, reps: usize, seed: u64) -> PyResult<f64> {
    let dims = ProblemDims::new(n, p).map_err(err)?;
    let est = EstimatorSpec::from_label(label, dims).map_err(err)?;
    let mean = MeanSpec::new(dims, sigma).map_err(err)?;
    Ok(py.detach(|| mc_sure_agreement_for(&mean, &est, reps, seed)).map_err(err)?.max_abs_z)
}

/// Runs the check suite; returns `(name, max_error, tolerance, passed)` per check.
#[pyfunction]
#[pyo3(signature = (n = 10, p = 3, trials = 10, identity_trials = 1000, seed = 42))]
fn verify(py: Python<'_>, n: usize, p: usize, trials: usize, identity_trials: usize, seed: u64) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let cfg = VerifyConfig {
        dims: ProblemDims::new(n, p).map_err(err)?,
        fd_trials: trials,
        identity_trials,
        seed,
        fault: None,
    };
    let report = py.detach(|| run_verify(&cfg));
    Ok(report
        .checks
        .into_iter()
        .map(|c| (c.name, c.max_error, c.tolerance, c.passed))
        .collect())
}

#[pymodule]
#[pyo3(name = "orthoshrink")]
fn orthoshrink_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(gram_eigen, m)?)?;
    m.add_function(wrap_pyfunction!(singular_values, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(sure_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(log_objective_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(log_objective_laplacian, m)?)?;
    m.add_function(wrap_pyfunction!(efron_morris_zero_mean_risk, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_risk, m)?)?;
    m.add_function(wrap_pyfunction!(sure_agreement_z, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_class::<RiskEstimate>()?;
    m.add("ESTIMATOR_LABELS", orthoshrink::estimators::NAMED_LABELS.to_vec())?;
    Ok(())
}
