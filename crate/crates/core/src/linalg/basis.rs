use super::{numerical_rank, thin_q};
use crate::error::{EnvError, Result};
use nalgebra::DMatrix;
use std::cmp::Ordering;

const ORTHO_TOL: f64 = 1e-10;
const ZERO_TOL: f64 = 1e-10;

/// An `r x u` matrix with orthonormal columns, stored in canonical form:
/// each column's largest-magnitude entry is positive (first one on ties)
/// and columns are sorted in descending lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiOrthBasis(DMatrix<f64>);

impl SemiOrthBasis {
    /// Accepts a matrix whose columns are orthonormal (`|G^T G - I|_F <= 1e-10`).
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let u = m.ncols();
        if u > m.nrows() {
            return Err(EnvError::DimensionMismatch {
                context: "semi-orthogonal basis".into(),
                expected: format!("at most {} columns", m.nrows()),
                found: u.to_string(),
            });
        }
        let dev = (m.transpose() * &m - DMatrix::identity(u, u)).norm();
        if u > 0 && !(dev <= ORTHO_TOL) {
            return Err(EnvError::Numerical(format!(
                "columns are not orthonormal (deviation {dev:e})"
            )));
        }
        Ok(SemiOrthBasis(canonicalize(m)))
    }

    /// Orthonormal basis of the column span of a full-column-rank matrix.
    pub fn from_span(m: &DMatrix<f64>) -> Result<Self> {
        if numerical_rank(m, 1e-10) < m.ncols() {
            return Err(EnvError::Numerical("spanning matrix is rank deficient".into()));
        }
        Ok(SemiOrthBasis(canonicalize(thin_q(m))))
    }

    /// Wraps a matrix already in canonical form, without checks. Used when
    /// reloading serialized fits so the stored values are kept bit for bit.
    pub fn from_canonical_unchecked(m: DMatrix<f64>) -> Self {
        SemiOrthBasis(m)
    }

    pub fn empty(r: usize) -> Self {
        SemiOrthBasis(DMatrix::zeros(r, 0))
    }

    pub fn identity(r: usize) -> Self {
        SemiOrthBasis(DMatrix::identity(r, r))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    /// Orthogonal projection `B B^T`.
    pub fn projection(&self) -> DMatrix<f64> {
        &self.0 * self.0.transpose()
    }
}

fn canonicalize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let (r, u) = m.shape();
    for j in 0..u {
        let mut best = 0;
        let mut best_abs = -1.0;
        for i in 0..r {
            let a = m[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if m[(best, j)] < 0.0 {
            m.column_mut(j).neg_mut();
        }
        for i in 0..r {
            // avoid negative zeros so serialized output is stable
            if m[(i, j)] == 0.0 {
                m[(i, j)] = 0.0;
            }
        }
    }
    let mut order: Vec<usize> = (0..u).collect();
    order.sort_by(|&a, &b| lex_desc(&m, a, b));
    let mut out = DMatrix::zeros(r, u);
    for (c, &j) in order.iter().enumerate() {
        out.set_column(c, &m.column(j));
    }
    out
}

fn lex_desc(m: &DMatrix<f64>, a: usize, b: usize) -> Ordering {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, a)], m[(i, b)]);
        if (x - y).abs() > ZERO_TOL {
            return y.total_cmp(&x);
        }
    }
    Ordering::Equal
}

/// Orthonormal basis of the orthogonal complement of `span(B)`, from the
/// Householder QR decomposition of `[B | I_r]`.
pub fn complete_basis(b: &SemiOrthBasis) -> SemiOrthBasis {
    complete_matrix(b.matrix())
}

/// Same as [`complete_basis`] for a raw full-column-rank matrix.
pub(crate) fn complete_matrix(b: &DMatrix<f64>) -> SemiOrthBasis {
    let (r, u) = b.shape();
    if u == r {
        return SemiOrthBasis::empty(r);
    }
    let aug = super::hcat(b, &DMatrix::identity(r, r));
    let q = aug.qr().q();
    SemiOrthBasis(canonicalize(q.columns(u, r - u).into_owned()))
}

/// `||P_A - P_B||_F / sqrt(2u)`, a distance in `[0, 1]` between subspaces
/// of equal dimension `u`. Defined as 0 when `u = 0`.
pub fn subspace_distance(a: &SemiOrthBasis, b: &SemiOrthBasis) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(EnvError::DimensionMismatch {
            context: "subspace distance".into(),
            expected: format!("{}x{}", a.nrows(), a.ncols()),
            found: format!("{}x{}", b.nrows(), b.ncols()),
        });
    }
    let u = a.ncols();
    if u == 0 {
        return Ok(0.0);
    }
    let d = a.projection() - b.projection();
    Ok(d.norm() / (2.0 * u as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sign_and_order_are_canonical() {
        let m = DMatrix::from_row_slice(3, 2, &[0.0, -1.0, -1.0, 0.0, 0.0, 0.0]);
        let b = SemiOrthBasis::new(m).unwrap();
        assert_eq!(b.matrix(), &DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn complete_basis_of_e1_in_r3() {
        let b = SemiOrthBasis::new(DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).unwrap();
        let c = complete_basis(&b);
        assert_eq!(c.ncols(), 2);
        assert_relative_eq!(c.matrix().clone(), DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]), epsilon = 1e-15);
    }

    #[test]
    fn complete_basis_of_full_and_empty() {
        assert_eq!(complete_basis(&SemiOrthBasis::identity(3)).ncols(), 0);
        let c = complete_basis(&SemiOrthBasis::empty(3));
        assert_eq!(c.matrix(), &DMatrix::<f64>::identity(3, 3));
    }

    #[test]
    fn distance_between_e1_and_diagonal() {
        let a = SemiOrthBasis::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let s = 0.5_f64.sqrt();
        let b = SemiOrthBasis::new(DMatrix::from_column_slice(2, 1, &[s, s])).unwrap();
        // P_A - P_B = [[1/2, -1/2], [-1/2, -1/2]], Frobenius norm 1, divided by sqrt(2)
        assert_relative_eq!(subspace_distance(&a, &b).unwrap(), s, epsilon = 1e-15);
        assert_eq!(subspace_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn distance_of_empty_bases_is_zero() {
        assert_eq!(subspace_distance(&SemiOrthBasis::empty(4), &SemiOrthBasis::empty(4)).unwrap(), 0.0);
    }

    #[test]
    fn distance_rejects_mismatch() {
        let r = subspace_distance(&SemiOrthBasis::identity(2), &SemiOrthBasis::empty(2));
        assert!(matches!(r, Err(EnvError::DimensionMismatch { .. })));
    }

    #[test]
    fn non_orthonormal_input_rejected() {
        let m = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert!(SemiOrthBasis::new(m).is_err());
    }
}
