//! Random matrices for tests and the verification suite.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::Mat;

/// `n × p` matrix of independent standard normals.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize) -> Mat {
    Mat::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    let qr = gaussian_matrix(rng, n, n).qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}
