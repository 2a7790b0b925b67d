//! Finite-difference oracles over observation space.
//!
//! These deliberately go through nothing but function evaluations so they
//! stay independent of the closed forms they are used to check.

use crate::error::{Error, Result};
use crate::spectral::symmetrize;
use crate::Mat;

/// Default step for first derivatives.
pub const FIRST_ORDER_STEP: f64 = 1e-5;
/// Default step for second derivatives.
pub const SECOND_ORDER_STEP: f64 = 1e-4;

fn check_step(step: f64) -> Result<()> {
    if step > 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("finite-difference step must be positive, got {step}")))
    }
}

fn eval<F: Fn(&Mat) -> f64>(f: &F, x: &Mat) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("finite-difference evaluation"))
    }
}

/// Central-difference matrix gradient of a scalar field.
pub fn fd_gradient<F: Fn(&Mat) -> f64>(x: &Mat, f: F, step: f64) -> Result<Mat> {
    check_step(step)?;
    let mut out = Mat::zeros(x.nrows(), x.ncols());
    let mut work = x.clone();
    for i in 0..x.ncols() {
        for a in 0..x.nrows() {
            let orig = x[(a, i)];
            work[(a, i)] = orig + step;
            let up = eval(&f, &work)?;
            work[(a, i)] = orig - step;
            let dn = eval(&f, &work)?;
            work[(a, i)] = orig;
            out[(a, i)] = (up - dn) / (2.0 * step);
        }
    }
    Ok(out)
}

/// Central-difference Jacobian of a matrix-valued map, contracted into the
/// matrix divergence `(div g)_{ij} = Σ_a ∂g_{aj}/∂X_{ai}`.
pub fn fd_matrix_divergence<G: Fn(&Mat) -> Result<Mat>>(x: &Mat, g: G, step: f64) -> Result<Mat> {
    check_step(step)?;
    let (n, p) = x.shape();
    let mut out = Mat::zeros(p, p);
    let mut work = x.clone();
    for i in 0..p {
        for a in 0..n {
            let orig = x[(a, i)];
            work[(a, i)] = orig + step;
            let up = g(&work)?;
            work[(a, i)] = orig - step;
            let dn = g(&work)?;
            work[(a, i)] = orig;
            for j in 0..p {
                out[(i, j)] += (up[(a, j)] - dn[(a, j)]) / (2.0 * step);
            }
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("finite-difference divergence"));
    }
    Ok(out)
}

/// Nested central differences for `Σ_a ∂²f/∂X_{ai}∂X_{aj}`: three-point
/// stencil on the diagonal, four-point stencil off it, then symmetrized.
pub fn fd_matrix_laplacian<F: Fn(&Mat) -> f64>(x: &Mat, f: F, step: f64) -> Result<Mat> {
    check_step(step)?;
    let (n, p) = x.shape();
    let h = step;
    let f0 = eval(&f, x)?;
    let mut out = Mat::zeros(p, p);
    let mut work = x.clone();
    for a in 0..n {
        for i in 0..p {
            let xi = x[(a, i)];
            work[(a, i)] = xi + h;
            let up = eval(&f, &work)?;
            work[(a, i)] = xi - h;
            let dn = eval(&f, &work)?;
            work[(a, i)] = xi;
            out[(i, i)] += (up - 2.0 * f0 + dn) / (h * h);

            for j in (i + 1)..p {
                let xj = x[(a, j)];
                let mut corner = |si: f64, sj: f64| -> Result<f64> {
                    work[(a, i)] = xi + si * h;
                    work[(a, j)] = xj + sj * h;
                    let v = eval(&f, &work);
                    work[(a, i)] = xi;
                    work[(a, j)] = xj;
                    v
                };
                let pp = corner(1.0, 1.0)?;
                let pm = corner(1.0, -1.0)?;
                let mp = corner(-1.0, 1.0)?;
                let mm = corner(-1.0, -1.0)?;
                let mixed = (pp - pm - mp + mm) / (4.0 * h * h);
                out[(i, j)] += mixed;
                out[(j, i)] += mixed;
            }
        }
    }
    symmetrize(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::test_support::gaussian_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs(a: &Mat) -> f64 {
        a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn gradient_of_frobenius_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian_matrix(&mut rng, 6, 3);
        let g = fd_gradient(&x, |m: &Mat| m.norm_squared(), FIRST_ORDER_STEP).unwrap();
        assert!(max_abs(&(g - &x * 2.0)) < 1e-8);
        let c = fd_gradient(&x, |_: &Mat| 4.2, FIRST_ORDER_STEP).unwrap();
        assert_eq!(max_abs(&c), 0.0);
    }

    #[test]
    fn laplacian_of_frobenius_norm_and_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian_matrix(&mut rng, 6, 3);
        let l = fd_matrix_laplacian(&x, |m: &Mat| m.norm_squared(), SECOND_ORDER_STEP).unwrap();
        assert!(max_abs(&(l - Mat::identity(3, 3) * 12.0)) < 1e-5);
        let w = gaussian_matrix(&mut rng, 6, 3);
        let lin = fd_matrix_laplacian(&x, |m: &Mat| m.dot(&w), SECOND_ORDER_STEP).unwrap();
        assert!(max_abs(&lin) < 1e-5);
    }

    #[test]
    fn bad_step_and_non_finite() {
        let x = Mat::identity(3, 2);
        assert!(fd_gradient(&x, |m: &Mat| m.norm(), 0.0).is_err());
        assert!(fd_gradient(&x, |_: &Mat| f64::NAN, 1e-5).is_err());
        assert!(fd_matrix_laplacian(&x, |_: &Mat| f64::INFINITY, 1e-4).is_err());
    }

    #[test]
    fn divergence_of_identity_map() {
        // g(X) = X has div g = n I
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gaussian_matrix(&mut rng, 5, 2);
        let d = fd_matrix_divergence(&x, |m: &Mat| Ok(m.clone()), FIRST_ORDER_STEP).unwrap();
        assert!(max_abs(&(d - Mat::identity(2, 2) * 5.0)) < 1e-8);
    }
}
