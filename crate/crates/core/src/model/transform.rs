use crate::error::{EnvError, Result};
use crate::linalg::{complete_basis, numerical_rank, spd_inverse, SemiOrthBasis};
use crate::model::Dataset;
use nalgebra::DMatrix;

/// Responses rotated by `W = (U (U^T U)^{-1}, U_0)` into the coordinates
/// `Y_D = Y U (U^T U)^{-1}` and `Y_S = Y U_0`.
#[derive(Debug, Clone)]
pub struct TransformedData {
    pub yd: DMatrix<f64>,
    pub ys: DMatrix<f64>,
    pub x: DMatrix<f64>,
    /// The within-subject design as supplied (`r x k`).
    pub u: DMatrix<f64>,
    /// Orthonormal basis of `span(U)`.
    pub u_orth: SemiOrthBasis,
    /// Orthonormal basis of the complement of `span(U)`.
    pub u0: SemiOrthBasis,
    /// `log |det W| = -1/2 log det(U^T U)`.
    pub log_abs_det_w: f64,
}

impl TransformedData {
    pub fn n(&self) -> usize {
        self.yd.nrows()
    }
    pub fn k(&self) -> usize {
        self.yd.ncols()
    }
    pub fn r(&self) -> usize {
        self.u.nrows()
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Splits the responses into the part carried by `span(U)` and its complement.
pub fn transform_responses(data: &Dataset, u: &DMatrix<f64>) -> Result<TransformedData> {
    let r = data.r();
    if u.nrows() != r {
        return Err(EnvError::DimensionMismatch {
            context: "within-subject design U".into(),
            expected: format!("{r} rows"),
            found: u.nrows().to_string(),
        });
    }
    let k = u.ncols();
    if k == 0 || k > r || numerical_rank(u, 1e-10) < k {
        return Err(EnvError::RankDeficientU);
    }
    let utu = u.transpose() * u;
    let utu_inv = spd_inverse(&utu, "U^T U").map_err(|_| EnvError::RankDeficientU)?;
    let w1 = u * &utu_inv;
    let u_orth = SemiOrthBasis::from_span(u).map_err(|_| EnvError::RankDeficientU)?;
    let u0 = complete_basis(&u_orth);
    let yd = data.y() * &w1;
    let ys = data.y() * u0.matrix();
    let log_abs_det_w = -0.5 * crate::linalg::logdet_spd(&utu, "U^T U")?;
    Ok(TransformedData {
        yd,
        ys,
        x: data.x().clone(),
        u: u.clone(),
        u_orth,
        u0,
        log_abs_det_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy() -> Dataset {
        let y = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 0.5, 0.0, 1.0, 2.0, 3.0, 1.0, 1.0, 2.0, 0.0, 1.5]);
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 0.0, 1.0]);
        Dataset::new(y, x).unwrap()
    }

    #[test]
    fn reconstruction_is_exact() {
        let data = toy();
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 8.0, 1.0, 10.0, 1.0, 12.0]);
        let t = transform_responses(&data, &u).unwrap();
        let back = &t.yd * u.transpose() + &t.ys * t.u0.matrix().transpose();
        assert_relative_eq!(back, data.y().clone(), epsilon = 1e-12);
    }

    #[test]
    fn identity_design_leaves_y_unchanged() {
        let data = toy();
        let t = transform_responses(&data, &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(t.ys.ncols(), 0);
        assert_relative_eq!(t.yd, data.y().clone(), epsilon = 1e-15);
        assert_eq!(t.log_abs_det_w, 0.0);
    }

    #[test]
    fn rank_deficient_design_rejected() {
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(transform_responses(&toy(), &u), Err(EnvError::RankDeficientU)));
    }

    #[test]
    fn wrong_row_count_rejected() {
        let u = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!(matches!(transform_responses(&toy(), &u), Err(EnvError::DimensionMismatch { .. })));
    }
}
