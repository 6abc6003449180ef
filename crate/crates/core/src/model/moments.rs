use crate::error::{EnvError, Result};
use crate::linalg::symmetrize;
use crate::model::{Dataset, InterceptMode, TransformedData};
use nalgebra::{Cholesky, DMatrix, DVector};

/// Sample moments of the transformed data. All divisors are `n`.
///
/// `A|B` denotes the residual covariance of `A` after regression on `B`
/// with an intercept: `S_AA - S_AB S_BB^{-1} S_BA`.
#[derive(Debug, Clone)]
pub struct Moments {
    pub n: usize,
    pub mode: InterceptMode,
    pub x_bar: DVector<f64>,
    pub yd_bar: DVector<f64>,
    pub ys_bar: DVector<f64>,
    pub s_x: DMatrix<f64>,
    pub s_d: DMatrix<f64>,
    /// Centered covariance of `Y_S`.
    pub s_s: DMatrix<f64>,
    /// Marginal second moment of `Y_S`: `T_S` under model 2, `S_S` under model 3.
    pub s_s_marginal: DMatrix<f64>,
    pub s_dx: DMatrix<f64>,
    pub s_ds: DMatrix<f64>,
    pub s_sx: DMatrix<f64>,
    pub s_d_given_s: DMatrix<f64>,
    pub s_d_given_xs: DMatrix<f64>,
    pub s_x_given_s: DMatrix<f64>,
}

impl Moments {
    pub fn k(&self) -> usize {
        self.s_d.nrows()
    }
    pub fn p(&self) -> usize {
        self.s_x.nrows()
    }
    pub fn r_minus_k(&self) -> usize {
        self.s_s.nrows()
    }
}

/// Centered and conditional moments of `(X, Y_D, Y_S)`.
pub fn compute_moments(t: &TransformedData, mode: InterceptMode) -> Result<Moments> {
    let n = t.n();
    let (p, k, s) = (t.p(), t.k(), t.ys.ncols());
    let z = crate::linalg::hcat(&crate::linalg::hcat(&t.x, &t.yd), &t.ys);
    let (mean, cov) = mean_cov(&z);
    let block = |r0: usize, nr: usize, c0: usize, nc: usize| cov.view((r0, c0), (nr, nc)).into_owned();
    let (ix, id, is) = (0, p, p + k);
    let s_x = block(ix, p, ix, p);
    let s_d = block(id, k, id, k);
    let s_s = block(is, s, is, s);
    let s_dx = block(id, k, ix, p);
    let s_ds = block(id, k, is, s);
    let s_sx = block(is, s, ix, p);
    if Cholesky::new(s_x.clone()).is_none() {
        return Err(EnvError::SingularDesign);
    }
    let s_s_marginal = match mode {
        InterceptMode::Model3 => s_s.clone(),
        InterceptMode::Model2 => symmetrize(&(t.ys.transpose() * &t.ys / n as f64)),
    };
    if s > 0 && Cholesky::new(s_s_marginal.clone()).is_none() {
        let which = if mode == InterceptMode::Model2 { "T_S" } else { "S_S" };
        return Err(EnvError::SingularMoment { which: which.into() });
    }
    let s_d_given_s = resid_cov(&s_d, &s_ds, &s_s, "S_S")?;
    let s_x_given_s = resid_cov(&s_x, &s_sx.transpose(), &s_s, "S_S")?;
    // regress Y_D on (X, Y_S) jointly
    let b_cov = block_sym(&cov, ix, p, is, s);
    let d_b = crate::linalg::hcat(&s_dx, &s_ds);
    let s_d_given_xs = resid_cov(&s_d, &d_b, &b_cov, "S_(X,S)")?;
    if Cholesky::new(s_d_given_xs.clone()).is_none() {
        return Err(EnvError::SingularMoment { which: "S_D|(X,S)".into() });
    }
    Ok(Moments {
        n,
        mode,
        x_bar: mean.rows(ix, p).into_owned(),
        yd_bar: mean.rows(id, k).into_owned(),
        ys_bar: mean.rows(is, s).into_owned(),
        s_x,
        s_d,
        s_s,
        s_s_marginal,
        s_dx,
        s_ds,
        s_sx,
        s_d_given_s,
        s_d_given_xs,
        s_x_given_s,
    })
}

fn block_sym(cov: &DMatrix<f64>, a0: usize, na: usize, b0: usize, nb: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(na + nb, na + nb);
    out.view_mut((0, 0), (na, na)).copy_from(&cov.view((a0, a0), (na, na)));
    out.view_mut((0, na), (na, nb)).copy_from(&cov.view((a0, b0), (na, nb)));
    out.view_mut((na, 0), (nb, na)).copy_from(&cov.view((b0, a0), (nb, na)));
    out.view_mut((na, na), (nb, nb)).copy_from(&cov.view((b0, b0), (nb, nb)));
    out
}

/// Column means and divisor-`n` covariance.
pub(crate) fn mean_cov(z: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = z.nrows() as f64;
    let mean = DVector::from_iterator(z.ncols(), z.column_iter().map(|c| c.sum() / n));
    let mut zc = z.clone();
    for (j, mut col) in zc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let cov = symmetrize(&(zc.transpose() * &zc / n));
    (mean, cov)
}

/// `S_AA - S_AB S_BB^{-1} S_BA`. `S_BB` of size zero returns `S_AA`.
pub fn resid_cov(saa: &DMatrix<f64>, sab: &DMatrix<f64>, sbb: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if sbb.nrows() == 0 {
        return Ok(saa.clone());
    }
    let chol = Cholesky::new(symmetrize(sbb)).ok_or_else(|| EnvError::SingularMoment { which: what.into() })?;
    let sol = chol.solve(&sab.transpose());
    Ok(symmetrize(&(saa - sab * sol)))
}

/// Residual covariance of the columns of `a` after regression on the
/// columns of `b` with an intercept (divisor `n`).
pub fn regression_residual_cov(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let z = crate::linalg::hcat(a, b);
    let (_, cov) = mean_cov(&z);
    let (na, nb) = (a.ncols(), b.ncols());
    let saa = cov.view((0, 0), (na, na)).into_owned();
    let sab = cov.view((0, na), (na, nb)).into_owned();
    let sbb = cov.view((na, na), (nb, nb)).into_owned();
    resid_cov(&saa, &sab, &sbb, what)
}

/// Moments of the untransformed data used by the `um` and `em` estimators.
#[derive(Debug, Clone)]
pub struct FullMoments {
    pub n: usize,
    pub x_bar: DVector<f64>,
    pub y_bar: DVector<f64>,
    pub s_x: DMatrix<f64>,
    pub s_y: DMatrix<f64>,
    pub s_yx: DMatrix<f64>,
    pub s_y_given_x: DMatrix<f64>,
}

pub fn compute_full_moments(data: &Dataset) -> Result<FullMoments> {
    let (p, r) = (data.p(), data.r());
    let z = crate::linalg::hcat(data.x(), data.y());
    let (mean, cov) = mean_cov(&z);
    let s_x = cov.view((0, 0), (p, p)).into_owned();
    let s_y = cov.view((p, p), (r, r)).into_owned();
    let s_yx = cov.view((p, 0), (r, p)).into_owned();
    if Cholesky::new(s_x.clone()).is_none() {
        return Err(EnvError::SingularDesign);
    }
    let s_y_given_x = resid_cov(&s_y, &s_yx, &s_x, "S_X")?;
    if Cholesky::new(s_y_given_x.clone()).is_none() {
        return Err(EnvError::SingularMoment { which: "S_Y|X".into() });
    }
    Ok(FullMoments {
        n: data.n(),
        x_bar: mean.rows(0, p).into_owned(),
        y_bar: mean.rows(p, r).into_owned(),
        s_x,
        s_y,
        s_yx,
        s_y_given_x,
    })
}
