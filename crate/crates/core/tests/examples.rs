//! Worked examples with known answers, one test per example group.

use std::f64::consts::E;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use orthoshrink::calculus::fd::{fd_gradient, fd_matrix_laplacian, FIRST_ORDER_STEP, SECOND_ORDER_STEP};
use orthoshrink::calculus::{
    gradient_gram, invariant_value, lambda_gradient, lambda_pair_identity, matrix_gradient_invariant,
    matrix_laplacian_invariant, scalar_laplacian_invariant,
};
use orthoshrink::estimators::{
    efron_morris_coeffs, log_objective, mle, positive_part_shrinkage, pseudo_bayes, spectral_shrinkage, stein_coeffs,
};
use orthoshrink::montecarlo::test_support::gaussian_matrix;
use orthoshrink::montecarlo::{
    appendix_sweep, mc_matrix_risk, mc_sure_agreement_for, mean_from_singular_values, run_sweep, sample_observation,
    stream_rng, Grid,
};
use orthoshrink::risk::{
    divergence_sure_numeric, em_zero_mean_exact_risk, sure_frobenius, sure_matrix_general, sure_matrix_shrinkage,
    sure_matrix_stein,
};
use orthoshrink::spectral::{eigen_gap_check, gram_spectral, thin_svd, GapCheck};
use orthoshrink::{
    EstimatorSpec, InvariantObjective, LogObjective, Mat, MeanSpec, PolynomialObjective, ProblemDims,
    ShrinkageCoefficients, SumObjective, SweepSpec, ZeroObjective,
};

fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    max_abs(&(a - b)) / max_abs(a).max(max_abs(b)).max(f64::MIN_POSITIVE)
}

/// `n × p` matrix with `d` on the leading diagonal.
fn embedded_diag(n: usize, d: &[f64]) -> Mat {
    let mut x = Mat::zeros(n, d.len());
    for (k, v) in d.iter().enumerate() {
        x[(k, k)] = *v;
    }
    x
}

fn dims(n: usize, p: usize) -> ProblemDims {
    ProblemDims::new(n, p).unwrap()
}

fn coeffs(c: &[f64]) -> ShrinkageCoefficients {
    ShrinkageCoefficients::new(c.to_vec()).unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn well_separated(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Mat {
    loop {
        let x = gaussian_matrix(rng, n, p);
        if eigen_gap_check(gram_spectral(&x).unwrap().lambda(), 1e-4).is_ok() {
            return x;
        }
    }
}

// ---- spectral decompositions ----

#[test]
fn padded_identity_has_unit_spectrum() {
    let sp = gram_spectral(&embedded_diag(5, &[1.0, 1.0, 1.0])).unwrap();
    for l in sp.lambda() {
        assert!((l - 1.0).abs() < 1e-14);
    }
    let vtv = sp.eigenvectors.transpose() * &sp.eigenvectors;
    assert!(max_abs(&(vtv - Mat::identity(3, 3))) < 1e-14);
}

#[test]
fn diagonal_gram_gives_coordinate_eigenvectors() {
    let sp = gram_spectral(&embedded_diag(4, &[2.0, 1.0])).unwrap();
    assert!((sp.lambda()[0] - 4.0).abs() < 1e-14 && (sp.lambda()[1] - 1.0).abs() < 1e-14);
    let v = sp.eigenvectors.abs();
    assert!(max_abs(&(v - Mat::identity(2, 2))) < 1e-14);
}

#[test]
fn gram_reconstruction_on_random_input() {
    let mut r = rng(1);
    for _ in 0..50 {
        let x = gaussian_matrix(&mut r, 10, 3);
        let sp = gram_spectral(&x).unwrap();
        let rec = sp.congruence(sp.lambda());
        assert!(max_abs(&(rec - x.transpose() * &x)) < 1e-10);
    }
}

#[test]
fn svd_of_zero_and_diagonal() {
    let z = thin_svd(&Mat::zeros(4, 3)).unwrap();
    assert!(z.singular_values.iter().all(|s| *s == 0.0));
    let d = thin_svd(&embedded_diag(4, &[3.0, 2.0])).unwrap();
    assert!((d.singular_values[0] - 3.0).abs() < 1e-14 && (d.singular_values[1] - 2.0).abs() < 1e-14);
}

#[test]
fn svd_reconstructs_and_squares_to_gram_spectrum() {
    let mut r = rng(2);
    for _ in 0..50 {
        let x = gaussian_matrix(&mut r, 10, 3);
        let svd = thin_svd(&x).unwrap();
        assert!(max_abs(&(svd.recompose(svd.singular_values.as_slice()) - &x)) < 1e-10);
        let sp = gram_spectral(&x).unwrap();
        for k in 0..3 {
            let s2 = svd.singular_values[k].powi(2);
            assert!((s2 - sp.lambda()[k]).abs() <= 1e-10 * s2);
        }
    }
}

#[test]
fn gap_check_cases() {
    assert_eq!(eigen_gap_check(&[4.0, 2.0, 1.0], 1e-8), GapCheck::Ok);
    // 0-based indices of the tied pair.
    assert_eq!(eigen_gap_check(&[4.0, 4.0, 1.0], 1e-8), GapCheck::Degenerate(0, 1));
    assert_eq!(eigen_gap_check(&[4.0, 2.0, 0.0], 1e-8), GapCheck::ZeroSmallest(2));
}

// ---- derivatives of invariant functions ----

#[test]
fn lambda_gradient_of_diagonal_input() {
    let x = embedded_diag(4, &[3.0, 2.0]);
    let sp = gram_spectral(&x).unwrap();
    let g = lambda_gradient(&x, &sp, 0).unwrap();
    let mut expected = Mat::zeros(4, 2);
    expected[(0, 0)] = 6.0;
    assert!(max_abs(&(g - expected)) < 1e-12);
}

#[test]
fn matrix_gradient_examples() {
    let mut r = rng(3);
    let x = well_separated(&mut r, 10, 3);
    assert_eq!(max_abs(&matrix_gradient_invariant(&x, &ZeroObjective).unwrap()), 0.0);
    let g = matrix_gradient_invariant(&x, &SumObjective).unwrap();
    assert!(max_abs(&(g - &x * 2.0)) < 1e-12);

    let c = [6.0, 4.0, 1.5];
    let g = matrix_gradient_invariant(&x, &LogObjective::new(c.to_vec())).unwrap();
    let svd = thin_svd(&x).unwrap();
    let shrink: Vec<f64> = (0..3).map(|k| -c[k] / svd.singular_values[k]).collect();
    assert!(rel(&g, &svd.recompose(&shrink)) < 1e-12);
}

#[test]
fn gradient_gram_examples() {
    let mut r = rng(4);
    let x = well_separated(&mut r, 10, 3);
    assert_eq!(max_abs(&gradient_gram(&x, &ZeroObjective).unwrap()), 0.0);
    let g = gradient_gram(&x, &SumObjective).unwrap();
    assert!(rel(&g, &(x.transpose() * &x * 4.0)) < 1e-12);
    let em = log_objective(&efron_morris_coeffs(dims(10, 3)).unwrap());
    let grad = matrix_gradient_invariant(&x, &em).unwrap();
    assert!(rel(&gradient_gram(&x, &em).unwrap(), &(grad.transpose() * grad)) < 1e-10);
}

#[test]
fn matrix_laplacian_examples() {
    let mut r = rng(5);
    let x = well_separated(&mut r, 10, 3);
    let l = matrix_laplacian_invariant(&x, &SumObjective).unwrap();
    assert!(max_abs(&(l - Mat::identity(3, 3) * 20.0)) < 1e-10);

    // Σ log λ_k: weights of −½ Σ w log λ with w = −2.
    let logdet = LogObjective::new(vec![-2.0; 3]);
    let inv = (x.transpose() * &x).try_inverse().unwrap();
    let l = matrix_laplacian_invariant(&x, &logdet).unwrap();
    assert!(rel(&l, &(inv * 12.0)) < 1e-10);
}

#[test]
fn scalar_laplacian_examples() {
    let mut r = rng(6);
    let x = well_separated(&mut r, 10, 3);
    assert!((scalar_laplacian_invariant(&x, &SumObjective).unwrap() - 60.0).abs() < 1e-10);
    assert_eq!(scalar_laplacian_invariant(&x, &ZeroObjective).unwrap(), 0.0);
    let poly = PolynomialObjective::new(vec![0.3, -0.7, 1.1], vec![0.05, -0.02, 0.01], vec![0.0, 0.04, -0.03, 0.0, 0.0, 0.02, 0.0, 0.0, 0.0]);
    let tr = matrix_laplacian_invariant(&x, &poly).unwrap().trace();
    let s = scalar_laplacian_invariant(&x, &poly).unwrap();
    assert!((s - tr).abs() <= 1e-10 * s.abs().max(tr.abs()));
}

#[test]
fn lambda_pair_identity_single_eigenvalue() {
    let (lhs, rhs) = lambda_pair_identity(&[3.7]).unwrap();
    assert_eq!(lhs, vec![0.0]);
    assert_eq!(rhs, vec![0.0]);
}

#[test]
fn fd_gradient_examples() {
    let mut r = rng(7);
    let x = well_separated(&mut r, 10, 3);
    let g = fd_gradient(&x, |m: &Mat| m.norm_squared(), FIRST_ORDER_STEP).unwrap();
    assert!(max_abs(&(g - &x * 2.0)) < 1e-6);
    let g = fd_gradient(&x, |_: &Mat| 4.2, FIRST_ORDER_STEP).unwrap();
    assert_eq!(max_abs(&g), 0.0);

    let sp = gram_spectral(&x).unwrap();
    let g = fd_gradient(&x, |m: &Mat| gram_spectral(m).unwrap().lambda()[0], FIRST_ORDER_STEP).unwrap();
    assert!(rel(&g, &lambda_gradient(&x, &sp, 0).unwrap()) < 1e-5);
}

#[test]
fn fd_laplacian_examples() {
    let mut r = rng(8);
    let x = well_separated(&mut r, 10, 3);
    let l = fd_matrix_laplacian(&x, |m: &Mat| m.norm_squared(), SECOND_ORDER_STEP).unwrap();
    assert!(max_abs(&(l - Mat::identity(3, 3) * 20.0)) < 1e-3);
    let a = gaussian_matrix(&mut r, 10, 3);
    let l = fd_matrix_laplacian(&x, |m: &Mat| m.dot(&a), SECOND_ORDER_STEP).unwrap();
    assert!(max_abs(&l) < 1e-3);

    let logdet = |m: &Mat| (m.transpose() * m).determinant().ln();
    let l = fd_matrix_laplacian(&x, logdet, SECOND_ORDER_STEP).unwrap();
    let analytic = matrix_laplacian_invariant(&x, &LogObjective::new(vec![-2.0; 3])).unwrap();
    assert!(max_abs(&(l - analytic)) < 1e-3);
}

// ---- estimators ----

#[test]
fn mle_is_identity_map() {
    assert_eq!(mle(&Mat::zeros(5, 3)), Mat::zeros(5, 3));
    let x = gaussian_matrix(&mut rng(9), 6, 2);
    assert_eq!(mle(&x), x);
}

#[test]
fn pseudo_bayes_examples() {
    let mut r = rng(10);
    let d = dims(10, 3);
    let x = well_separated(&mut r, 10, 3);
    assert!(max_abs(&(pseudo_bayes(&x, &ZeroObjective).unwrap() - &x)) < 1e-15);

    let em = efron_morris_coeffs(d).unwrap();
    let inv = (x.transpose() * &x).try_inverse().unwrap();
    let closed = &x * (Mat::identity(3, 3) - inv * 6.0);
    assert!(rel(&pseudo_bayes(&x, &log_objective(&em)).unwrap(), &closed) < 1e-12);

    let c = coeffs(&[7.0, 2.5, 0.5]);
    assert!(rel(&pseudo_bayes(&x, &log_objective(&c)).unwrap(), &spectral_shrinkage(&x, &c).unwrap()) < 1e-12);
}

#[test]
fn spectral_shrinkage_examples() {
    let mut r = rng(11);
    let x = well_separated(&mut r, 10, 3);
    assert!(max_abs(&(spectral_shrinkage(&x, &coeffs(&[0.0; 3])).unwrap() - &x)) < 1e-12);

    let x2 = embedded_diag(4, &[2.0, 1.0]);
    let out = spectral_shrinkage(&x2, &coeffs(&[1.0, 1.0])).unwrap();
    assert!(max_abs(&(out - embedded_diag(4, &[1.5, 0.0]))) < 1e-14);

    let em = efron_morris_coeffs(dims(10, 3)).unwrap();
    let inv = (x.transpose() * &x).try_inverse().unwrap();
    let closed = &x * (Mat::identity(3, 3) - inv * 6.0);
    assert!(rel(&spectral_shrinkage(&x, &em).unwrap(), &closed) < 1e-12);
}

#[test]
fn positive_part_examples() {
    let mut r = rng(12);
    let x = well_separated(&mut r, 10, 3);
    assert!(max_abs(&(positive_part_shrinkage(&x, &coeffs(&[0.0; 3])).unwrap() - &x)) < 1e-12);
    let x2 = embedded_diag(4, &[2.0, 1.0]);
    let out = positive_part_shrinkage(&x2, &coeffs(&[1.0, 4.0])).unwrap();
    assert!(max_abs(&(out - embedded_diag(4, &[1.5, 0.0]))) < 1e-14);
}

#[test]
fn named_coefficients() {
    assert_eq!(efron_morris_coeffs(dims(10, 3)).unwrap().as_slice(), &[6.0, 6.0, 6.0]);
    assert_eq!(efron_morris_coeffs(dims(5, 3)).unwrap().as_slice(), &[1.0, 1.0, 1.0]);
    assert!(efron_morris_coeffs(dims(4, 3)).is_err());
    assert_eq!(stein_coeffs(dims(10, 3)).unwrap().as_slice(), &[10.0, 8.0, 6.0]);
    assert_eq!(stein_coeffs(dims(5, 3)).unwrap().as_slice(), &[5.0, 3.0, 1.0]);
}

#[test]
fn log_objective_examples() {
    let zero = log_objective(&coeffs(&[0.0, 0.0]));
    let lam = [2.0, 1.0];
    assert_eq!(zero.value(&lam), 0.0);
    assert!(zero.grad(&lam).iter().chain(zero.hess_diag(&lam).iter()).all(|v| *v == 0.0));

    let obj = log_objective(&coeffs(&[2.0, 0.0]));
    let lam = [E, 5.0];
    assert!((obj.value(&lam) + 1.0).abs() < 1e-15);
    let g = obj.grad(&lam);
    assert!((g[0] + 1.0 / E).abs() < 1e-15 && g[1] == 0.0);
}

// ---- unbiased risk estimates ----

#[test]
fn general_risk_examples() {
    let mut r = rng(13);
    let d = dims(10, 3);
    let x = well_separated(&mut r, 10, 3);
    let s = sure_matrix_general(&x, &ZeroObjective, d).unwrap();
    assert!(max_abs(&(s.entries - Mat::identity(3, 3) * 10.0)) < 1e-14);

    let em = log_objective(&efron_morris_coeffs(d).unwrap());
    let inv = (x.transpose() * &x).try_inverse().unwrap();
    let closed = Mat::identity(3, 3) * 10.0 - inv * 36.0;
    assert!(rel(&sure_matrix_general(&x, &em, d).unwrap().entries, &closed) < 1e-10);

    let poly = PolynomialObjective::new(vec![0.4, 0.1, -0.6], vec![0.02, 0.03, -0.01], vec![0.0, 0.05, 0.01, 0.0, 0.0, -0.04, 0.0, 0.0, 0.0]);
    let assembled = Mat::identity(3, 3) * 10.0
        + matrix_laplacian_invariant(&x, &poly).unwrap() * 2.0
        + gradient_gram(&x, &poly).unwrap();
    assert!(rel(&sure_matrix_general(&x, &poly, d).unwrap().entries, &assembled) < 1e-10);
}

#[test]
fn shrinkage_risk_examples() {
    let mut r = rng(14);
    let d = dims(10, 3);
    let x = well_separated(&mut r, 10, 3);
    let s = sure_matrix_shrinkage(&x, &coeffs(&[0.0; 3]), d).unwrap();
    assert!(max_abs(&(s.entries - Mat::identity(3, 3) * 10.0)) < 1e-14);

    let sp = gram_spectral(&x).unwrap();
    let inv_l: Vec<f64> = sp.lambda().iter().map(|l| 1.0 / l).collect();
    let closed = Mat::identity(3, 3) * 10.0 - sp.congruence(&inv_l) * 36.0;
    let em = efron_morris_coeffs(d).unwrap();
    assert!(rel(&sure_matrix_shrinkage(&x, &em, d).unwrap().entries, &closed) < 1e-12);

    let c = coeffs(&[9.0, 3.5, 0.25]);
    let a = sure_matrix_shrinkage(&x, &c, d).unwrap().entries;
    let b = sure_matrix_general(&x, &log_objective(&c), d).unwrap().entries;
    assert!(rel(&a, &b) < 1e-10);
}

#[test]
fn frobenius_risk_examples() {
    let mut r = rng(15);
    let d = dims(10, 3);
    let x = well_separated(&mut r, 10, 3);
    assert!((sure_frobenius(&x, &ZeroObjective, d).unwrap() - 30.0).abs() < 1e-12);
    let em = log_objective(&efron_morris_coeffs(d).unwrap());
    let lam = gram_spectral(&x).unwrap().lambda().to_vec();
    let expected = 30.0 - 36.0 * lam.iter().map(|l| 1.0 / l).sum::<f64>();
    let got = sure_frobenius(&x, &em, d).unwrap();
    assert!((got - expected).abs() <= 1e-10 * expected.abs().max(1.0));
}

#[test]
fn numeric_divergence_matches_closed_forms() {
    let mut r = rng(16);
    let d = dims(10, 3);
    let x = well_separated(&mut r, 10, 3);
    let mle_sure = divergence_sure_numeric(&x, &EstimatorSpec::mle(), d, 1e-5).unwrap();
    assert!(max_abs(&(mle_sure.entries - Mat::identity(3, 3) * 10.0)) < 1e-8);

    let c = coeffs(&[4.0, 2.0, 1.0]);
    let est = EstimatorSpec::from_label("custom:4,2,1", d).unwrap();
    let numeric = divergence_sure_numeric(&x, &est, d, 1e-5).unwrap();
    assert!(max_abs(&(numeric.entries - sure_matrix_shrinkage(&x, &c, d).unwrap().entries)) < 1e-4);

    let stein = EstimatorSpec::from_label("stein", d).unwrap();
    let numeric = divergence_sure_numeric(&x, &stein, d, 1e-5).unwrap();
    assert!(max_abs(&(numeric.entries - sure_matrix_stein(&x, d).unwrap().entries)) < 1e-4);
}

#[test]
fn efron_morris_zero_mean_risk_values() {
    assert_eq!(em_zero_mean_exact_risk(dims(10, 3)).unwrap(), Mat::identity(3, 3) * 4.0);
    assert_eq!(em_zero_mean_exact_risk(dims(6, 2)).unwrap(), Mat::identity(2, 2) * 3.0);
    assert!(em_zero_mean_exact_risk(dims(4, 3)).is_err());
}

// ---- Monte Carlo ----

#[test]
fn mean_embedding() {
    let d = dims(10, 3);
    assert_eq!(mean_from_singular_values(&MeanSpec::new(d, vec![0.0; 3]).unwrap()), Mat::zeros(10, 3));
    let m = mean_from_singular_values(&MeanSpec::new(d, vec![20.0, 0.0, 0.0]).unwrap());
    let mut expected = Mat::zeros(10, 3);
    expected[(0, 0)] = 20.0;
    assert_eq!(m, expected);
}

#[test]
fn noise_moments_and_stream_determinism() {
    let m = Mat::zeros(4, 3);
    let reps = 100_000;
    let mut sum = Mat::zeros(4, 3);
    let mut sq = Mat::zeros(4, 3);
    for r in 0..reps {
        let z = sample_observation(&m, &mut stream_rng(5, r));
        sq += z.component_mul(&z);
        sum += z;
    }
    let mean = sum / reps as f64;
    let var = sq / reps as f64 - mean.component_mul(&mean);
    assert!(max_abs(&mean) < 4.0 / (reps as f64).sqrt());
    assert!(var.iter().all(|v| (v - 1.0).abs() < 0.05));

    let a = sample_observation(&m, &mut stream_rng(9, 17));
    let b = sample_observation(&m, &mut stream_rng(9, 17));
    assert_eq!(a, b);
}

#[test]
fn mle_risk_is_n_identity() {
    let d = dims(10, 3);
    let mean = MeanSpec::new(d, vec![7.0, 2.0, 0.0]).unwrap();
    let r = mc_matrix_risk(&mean, &EstimatorSpec::mle(), 100_000, 3).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 10.0 } else { 0.0 };
            assert!((r.mean[(i, j)] - target).abs() <= 4.0 * r.stderr[(i, j)], "{i},{j}");
        }
    }
    assert!((r.frobenius - 30.0).abs() <= 4.0 * r.frobenius_stderr);
}

#[test]
fn efron_morris_risk_at_zero_mean() {
    let d = dims(10, 3);
    let est = EstimatorSpec::from_label("em", d).unwrap();
    let r = mc_matrix_risk(&MeanSpec::new(d, vec![0.0; 3]).unwrap(), &est, 100_000, 11).unwrap();
    for (k, v) in r.eigenvalues.iter().enumerate() {
        assert!((v - 4.0).abs() <= 4.0 * r.eigenvalue_se_proxy[k], "{:?}", r.eigenvalues);
    }
}

#[test]
fn stein_risk_at_zero_mean() {
    let d = dims(10, 3);
    let est = EstimatorSpec::from_label("stein", d).unwrap();
    let r = mc_matrix_risk(&MeanSpec::new(d, vec![0.0; 3]).unwrap(), &est, 100_000, 12).unwrap();
    assert!((r.frobenius - 7.6561).abs() <= 0.15, "{}", r.frobenius);
}

#[test]
fn paired_risk_estimate_agreement() {
    let d = dims(10, 3);
    let zero = MeanSpec::new(d, vec![0.0; 3]).unwrap();
    let spike = MeanSpec::new(d, vec![20.0, 0.0, 0.0]).unwrap();
    for (mean, label) in [(&zero, "mle"), (&zero, "em"), (&spike, "stein")] {
        let est = EstimatorSpec::from_label(label, d).unwrap();
        let a = mc_sure_agreement_for(mean, &est, 100_000, 21).unwrap();
        assert!(a.max_abs_z <= 4.0, "{label}: z = {}", a.max_abs_z);
    }
}

#[test]
fn single_point_sweep() {
    let spec = SweepSpec {
        dims: dims(10, 3),
        estimators: vec!["stein".into()],
        axis: 0,
        fixed: vec![0.0; 3],
        grid: Grid { start: 3.0, stop: 3.0, step: 1.0 },
        reps: 2,
        seed: 1,
    };
    let table = run_sweep(&spec).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert!(table.rows[0].estimate.frobenius_stderr.is_finite());
}

#[test]
fn appendix_examples() {
    for (p, n, reference) in [(3, 5, 4.9489), (10, 12, 11.5728), (3, 10, 9.9469)] {
        let rows = appendix_sweep(p, n..=n, 50.0, 100_000, 42).unwrap();
        let v = rows[0].largest_eigenvalue.unwrap();
        assert!((v - reference).abs() <= 0.10 && v < n as f64, "(p={p}, n={n}): {v}");
        assert!(rows[0].below_n);
    }
}

#[test]
fn random_draws_are_rejected_only_when_degenerate() {
    let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    assert!(gram_spectral(&x).unwrap().require_distinct().is_err());
    let v = invariant_value(&x, &SumObjective).unwrap();
    assert!((v - 2.0).abs() < 1e-15);
}
