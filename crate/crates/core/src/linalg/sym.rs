use super::{logdet_spd, spd_inverse, sym_eigen_desc, symmetrize};
use crate::error::{EnvError, Result};
use nalgebra::{DMatrix, DVector};

/// Real symmetric matrix. Construction checks symmetry to a relative
/// tolerance of 1e-12 and then stores the exactly symmetrized average.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub const SYM_TOL: f64 = 1e-12;

    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Self::named(m, "matrix")
    }

    /// Like [`SymMatrix::new`] with a name used in error messages.
    pub fn named(m: DMatrix<f64>, what: &str) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(EnvError::DimensionMismatch {
                context: format!("symmetric matrix `{what}`"),
                expected: "square".into(),
                found: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        let scale = m.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        let asym = (&m - m.transpose()).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if !asym.is_finite() || asym > Self::SYM_TOL * scale {
            return Err(EnvError::NotSymmetric { what: what.into(), asym });
        }
        Ok(SymMatrix(symmetrize(&m)))
    }

    /// Symmetrizes without checking.
    pub fn from_symmetrized(m: &DMatrix<f64>) -> Self {
        SymMatrix(symmetrize(m))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// True when the smallest eigenvalue exceeds `dim * eps * largest`.
    pub fn is_positive_definite(&self) -> bool {
        if self.dim() == 0 {
            return true;
        }
        let (vals, _) = self.eigen();
        let (hi, lo) = (vals[0], vals[vals.len() - 1]);
        hi > 0.0 && lo > self.dim() as f64 * f64::EPSILON * hi
    }

    pub fn inverse(&self) -> Result<SymMatrix> {
        Ok(SymMatrix(spd_inverse(&self.0, "symmetric matrix")?))
    }

    pub fn logdet(&self) -> Result<f64> {
        logdet_spd(&self.0, "symmetric matrix")
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Eigenvalues (descending) and matching eigenvectors.
    pub fn eigen(&self) -> (DVector<f64>, DMatrix<f64>) {
        sym_eigen_desc(&self.0)
    }

    /// Congruence `A^T M A`.
    pub fn congruence(&self, a: &DMatrix<f64>) -> SymMatrix {
        SymMatrix(symmetrize(&(a.transpose() * &self.0 * a)))
    }

    /// `M + c I`.
    pub fn shifted(&self, c: f64) -> SymMatrix {
        let n = self.dim();
        SymMatrix(&self.0 + DMatrix::identity(n, n) * c)
    }
}

impl std::ops::Deref for SymMatrix {
    type Target = DMatrix<f64>;
    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(EnvError::NotSymmetric { .. })));
    }

    #[test]
    fn rejects_non_square() {
        assert!(matches!(
            SymMatrix::new(DMatrix::zeros(2, 3)),
            Err(EnvError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tiny_asymmetry_is_averaged_away() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0 + 1e-15, 1.0, 2.0]);
        let s = SymMatrix::new(m).unwrap();
        assert_eq!(s[(0, 1)], s[(1, 0)]);
    }
}
