#![allow(dead_code)]

use envcore::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng, nrows: usize, ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(nrows, ncols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn orthogonal(rng: &mut ChaCha8Rng, r: usize) -> DMatrix<f64> {
    normal(rng, r, r).qr().q()
}

/// `A A^T / r + I`, comfortably positive definite.
pub fn spd(rng: &mut ChaCha8Rng, r: usize) -> DMatrix<f64> {
    let a = normal(rng, r, r);
    &a * a.transpose() / r as f64 + DMatrix::identity(r, r)
}

pub fn lower_chol(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().cholesky().expect("positive definite").l()
}

/// `n` draws of `Y = beta0 + beta X + e` with `e ~ N(0, sigma)` and
/// standard normal predictors.
pub fn regression_data(
    rng: &mut ChaCha8Rng,
    n: usize,
    beta: &DMatrix<f64>,
    beta0: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> Dataset {
    let x = normal(rng, n, beta.ncols());
    let l = lower_chol(sigma);
    let e = normal(rng, n, beta.nrows()) * l.transpose();
    let mut y = &x * beta.transpose() + e;
    for mut row in y.row_iter_mut() {
        row += beta0.transpose();
    }
    Dataset::new(y, x).unwrap()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).amax()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().min()
}

pub fn projection(m: &DMatrix<f64>) -> DMatrix<f64> {
    let q = m.clone().qr().q().columns(0, m.ncols()).into_owned();
    &q * q.transpose()
}
