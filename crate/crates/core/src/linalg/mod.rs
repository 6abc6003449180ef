//! Dense linear-algebra kernel: symmetric matrices, semi-orthogonal bases,
//! the envelope objective and its minimizer over the Stiefel manifold.

mod basis;
mod stiefel;
mod sym;

pub use basis::{complete_basis, subspace_distance, SemiOrthBasis};
pub use stiefel::{
    envelope_objective, minimize_envelope_objective, StiefelOptions, StiefelSolution,
};
pub use sym::SymMatrix;
pub(crate) use stiefel::minimize_with_starts;
pub(crate) use basis::complete_matrix;

use crate::error::{EnvError, Result};
use nalgebra::{DMatrix, DVector};

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let chol = nalgebra::Cholesky::new(symmetrize(m))
        .ok_or_else(|| EnvError::NonPositiveDefinite { what: what.into() })?;
    Ok(symmetrize(&chol.inverse()))
}

/// `log det` of a symmetric positive definite matrix. Zero for a 0x0 matrix.
pub fn logdet_spd(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let chol = nalgebra::Cholesky::new(symmetrize(m))
        .ok_or_else(|| EnvError::NonPositiveDefinite { what: what.into() })?;
    let l = chol.l_dirty();
    let mut s = 0.0;
    for i in 0..m.nrows() {
        s += l[(i, i)].ln();
    }
    Ok(2.0 * s)
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    let chol = nalgebra::Cholesky::new(symmetrize(a))
        .ok_or_else(|| EnvError::NonPositiveDefinite { what: what.into() })?;
    Ok(chol.solve(b))
}

/// `(A + A^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted descending.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Moore-Penrose inverse of a symmetric matrix. Eigenvalues below
/// `rel_cutoff * max|lambda|` are treated as zero.
pub fn pinv_sym(m: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let (vals, vecs) = sym_eigen_desc(m);
    let lmax = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let cut = rel_cutoff * lmax;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        if vals[i].abs() > cut && vals[i] != 0.0 {
            let v = vecs.column(i);
            out += (v * v.transpose()) / vals[i];
        }
    }
    symmetrize(&out)
}

/// Symmetric inverse square root `M^{-1/2}` of a positive definite matrix.
pub fn inv_sqrt_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let (vals, vecs) = sym_eigen_desc(m);
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        if vals[i] <= 0.0 {
            return Err(EnvError::NonPositiveDefinite { what: what.into() });
        }
        d[(i, i)] = 1.0 / vals[i].sqrt();
    }
    Ok(&vecs * d * vecs.transpose())
}

/// Kronecker product `A (x) B`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Column-stacking `vec` operator.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &DVector<f64>, nrows: usize, ncols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(nrows, ncols, v.as_slice())
}

/// Commutation matrix `K` with `K vec(A) = vec(A^T)` for `A` of size `m x n`.
pub fn commutation(m: usize, n: usize) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(m * n, m * n);
    for i in 0..m {
        for j in 0..n {
            // vec(A)[i + j m] = A[i,j]; vec(A^T)[j + i n] = A[i,j]
            k[(j + i * n, i + j * m)] = 1.0;
        }
    }
    k
}

/// Horizontal concatenation `[A | B]`.
pub fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "hcat row mismatch");
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Block-diagonal matrix `diag(A, B)`.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

/// Numerical rank from singular values relative to the largest one.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0_f64, |a, &s| a.max(s));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Thin orthonormal factor of the QR decomposition of a full-column-rank matrix.
pub fn thin_q(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let q = m.clone().qr().q();
    q.columns(0, m.ncols()).into_owned()
}

/// Polar orthonormalization `G (G^T G)^{-1/2}`, the closest matrix with
/// orthonormal columns.
pub fn polar_orthonormalize(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if g.ncols() == 0 {
        return Ok(g.clone());
    }
    let gtg = g.transpose() * g;
    Ok(g * inv_sqrt_spd(&gtg, "G^T G")?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn commutation_transposes_vec() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let k = commutation(2, 3);
        let lhs = &k * vec_of(&a);
        assert_eq!(lhs, vec_of(&a.transpose()));
    }

    #[test]
    fn logdet_matches_product_of_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert_relative_eq!(logdet_spd(&m, "m").unwrap(), (2.0_f64 - 0.25).ln(), epsilon = 1e-14);
        assert_eq!(logdet_spd(&DMatrix::zeros(0, 0), "e").unwrap(), 0.0);
    }

    #[test]
    fn logdet_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(logdet_spd(&m, "m"), Err(EnvError::NonPositiveDefinite { .. })));
    }

    #[test]
    fn pinv_of_rank_one() {
        let v = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let m = &v * v.transpose();
        let p = pinv_sym(&m, 1e-10);
        // pinv(v v^T) = v v^T / |v|^4
        let expect = &m / 81.0;
        assert_relative_eq!(p, expect, epsilon = 1e-12);
    }

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0]);
        let (vals, vecs) = sym_eigen_desc(&m);
        assert_eq!(vals.as_slice(), &[3.0, 2.0, 1.0]);
        assert_relative_eq!(vecs[(1, 0)].abs(), 1.0);
    }

    #[test]
    fn inv_sqrt_squares_to_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = inv_sqrt_spd(&m, "m").unwrap();
        let inv = spd_inverse(&m, "m").unwrap();
        assert_relative_eq!(&s * &s, inv, epsilon = 1e-12);
    }
}
