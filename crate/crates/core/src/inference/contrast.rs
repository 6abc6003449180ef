use super::{TestKind, TestResult};
use crate::error::{EnvError, Result};
use crate::estimators::avar::{envelope_avar, lift_avar};
use crate::estimators::{cm_from_context, CmContext, FitOptions, OptimizerSummary};
use crate::linalg::{
    complete_basis, complete_matrix, hcat, kron, logdet_spd, minimize_envelope_objective, numerical_rank, spd_inverse,
    symmetrize, SemiOrthBasis, SymMatrix,
};
use crate::model::{regression_residual_cov, Dataset, InterceptMode};
use crate::serde_mat::{mat, vector};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Envelope fit of the contrast `alpha_1 = alpha c1` with the remaining
/// directions `Z2 = c2`-coordinates of `X` treated as nuisance covariates.
#[derive(Debug, Clone, Serialize)]
pub struct ContrastFit {
    #[serde(with = "mat")]
    pub c1: DMatrix<f64>,
    #[serde(with = "mat")]
    pub c2: DMatrix<f64>,
    pub u1: usize,
    pub n: usize,
    #[serde(with = "mat")]
    pub alpha1: DMatrix<f64>,
    /// `alpha_cm c1`, the estimate without envelope reduction.
    #[serde(with = "mat")]
    pub alpha1_cm: DMatrix<f64>,
    pub basis: SemiOrthBasis,
    #[serde(with = "mat")]
    pub eta: DMatrix<f64>,
    #[serde(with = "mat")]
    pub omega: DMatrix<f64>,
    #[serde(with = "mat")]
    pub omega0: DMatrix<f64>,
    /// avar of `sqrt(n) vec(alpha1)`.
    #[serde(with = "mat")]
    pub avar_alpha1: DMatrix<f64>,
    /// avar of `sqrt(n) vec(alpha_cm c1)`.
    #[serde(with = "mat")]
    pub avar_alpha1_cm: DMatrix<f64>,
    /// avar of `sqrt(n) vec(U alpha1)`.
    #[serde(with = "mat")]
    pub avar_ualpha1: DMatrix<f64>,
    pub loglik: f64,
    /// Likelihood-ratio test of `alpha1 = 0` against dimension `u1`.
    pub test: TestResult,
    pub optimizer: OptimizerSummary,
}

/// Fits the contrast envelope with `c2` the orthonormal complement of `span(c1)`.
pub fn fit_contrast(
    data: &Dataset,
    design: &DMatrix<f64>,
    c1: &DMatrix<f64>,
    u1: usize,
    mode: InterceptMode,
    opts: &FitOptions,
) -> Result<ContrastFit> {
    check_contrast(data, c1)?;
    let c2 = complete_matrix(c1).into_matrix();
    fit_contrast_with_completion(data, design, c1, &c2, u1, mode, opts)
}

fn check_contrast(data: &Dataset, c1: &DMatrix<f64>) -> Result<()> {
    let p = data.p();
    if c1.nrows() != p || c1.ncols() == 0 || c1.ncols() > p {
        return Err(EnvError::DimensionMismatch {
            context: "contrast c1".into(),
            expected: format!("{p} x p1 with 1 <= p1 <= {p}"),
            found: format!("{} x {}", c1.nrows(), c1.ncols()),
        });
    }
    if numerical_rank(c1, 1e-10) < c1.ncols() {
        return Err(EnvError::RankDeficientContrast);
    }
    Ok(())
}

/// As [`fit_contrast`] with a caller-supplied completion `c2`; `(c1, c2)`
/// must be nonsingular.
pub fn fit_contrast_with_completion(
    data: &Dataset,
    design: &DMatrix<f64>,
    c1: &DMatrix<f64>,
    c2: &DMatrix<f64>,
    u1: usize,
    mode: InterceptMode,
    opts: &FitOptions,
) -> Result<ContrastFit> {
    check_contrast(data, c1)?;
    let (p, p1) = (data.p(), c1.ncols());
    if c2.nrows() != p || c2.ncols() != p - p1 {
        return Err(EnvError::DimensionMismatch {
            context: "contrast completion c2".into(),
            expected: format!("{p} x {}", p - p1),
            found: format!("{} x {}", c2.nrows(), c2.ncols()),
        });
    }
    let c = hcat(c1, c2);
    if numerical_rank(&c, 1e-10) < p {
        return Err(EnvError::RankDeficientContrast);
    }
    let ctx = CmContext::new(data, design, mode)?;
    let k = ctx.k();
    if u1 > k {
        return Err(EnvError::InvalidDimension { context: "contrast dimension u1".into(), dim: u1, lo: 0, hi: k });
    }
    let n = ctx.n() as f64;
    // rows of Z are C^{-1} x_i
    let c_inv = c.clone().try_inverse().ok_or(EnvError::RankDeficientContrast)?;
    let z = &ctx.t.x * c_inv.transpose();
    let z2 = z.columns(p1, p - p1).into_owned();
    let s_d_z2s = regression_residual_cov(&ctx.t.yd, &hcat(&z2, &ctx.t.ys), "S_D|(Z2,S)")?;

    let m1 = SymMatrix::named(ctx.m.s_d_given_xs.clone(), "S_D|(X,S)")?;
    let m2 = SymMatrix::named(spd_inverse(&s_d_z2s, "S_D|(Z2,S)")?, "S_D|(Z2,S)^-1")?;
    let sol = minimize_envelope_objective(&m1, &m2, u1, &opts.stiefel)?;
    let phi = sol.basis.matrix().clone();
    let phi0 = complete_basis(&sol.basis).into_matrix();

    let alpha1_cm = &ctx.alpha_cm * c1;
    let eta = phi.transpose() * &alpha1_cm;
    let alpha1 = &phi * &eta;
    let omega = symmetrize(&(phi.transpose() * m1.as_matrix() * &phi));
    let omega0 = symmetrize(&(phi0.transpose() * &s_d_z2s * &phi0));

    let sx_inv = spd_inverse(&ctx.m.s_x, "S_X")?;
    let s_z1_given_z2_inv = symmetrize(&(c1.transpose() * &sx_inv * c1));
    let s_z1_given_z2 = spd_inverse(&s_z1_given_z2_inv, "S_Z1|Z2")?;
    let avar_alpha1 = envelope_avar(&s_z1_given_z2, &phi, &phi0, &eta, &omega, &omega0)?;
    let avar_alpha1_cm = symmetrize(&kron(&s_z1_given_z2_inv, m1.as_matrix()));
    let avar_ualpha1 = lift_avar(&avar_alpha1, &ctx.t.u, p1);

    let base = ctx.c - n / 2.0 * (ctx.logdet_marginal + logdet_spd(&s_d_z2s, "S_D|(Z2,S)")?);
    let loglik = base - n / 2.0 * sol.objective;
    let test = TestResult::from_logliks(TestKind::Contrast, base, loglik, u1 * p1);
    Ok(ContrastFit {
        c1: c1.clone(),
        c2: c2.clone(),
        u1,
        n: ctx.n(),
        alpha1,
        alpha1_cm,
        basis: sol.basis.clone(),
        eta,
        omega,
        omega0,
        avar_alpha1,
        avar_alpha1_cm,
        avar_ualpha1,
        loglik,
        test,
        optimizer: OptimizerSummary::from(&sol),
    })
}

/// Envelope estimate of the mean profile `E(Y | X = x_new)` under the model
/// with a free intercept for `Y_S`, together with the constrained estimate.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileEstimate {
    #[serde(with = "vector")]
    pub x_new: DVector<f64>,
    pub u1: usize,
    #[serde(with = "vector")]
    pub mean: DVector<f64>,
    /// avar of `sqrt(n)` times the mean estimate.
    #[serde(with = "mat")]
    pub avar: DMatrix<f64>,
    #[serde(with = "vector")]
    pub mean_cm: DVector<f64>,
    #[serde(with = "mat")]
    pub avar_cm: DMatrix<f64>,
    pub n: usize,
}

impl ProfileEstimate {
    /// Pointwise standard errors `sqrt(avar_ii / n)`.
    pub fn standard_errors(&self) -> DVector<f64> {
        self.avar.diagonal().map(|v| (v.max(0.0) / self.n as f64).sqrt())
    }
    pub fn standard_errors_cm(&self) -> DVector<f64> {
        self.avar_cm.diagonal().map(|v| (v.max(0.0) / self.n as f64).sqrt())
    }
}

/// `P_U ybar + U alpha1_hat` with `c1 = x_new - xbar`.
pub fn estimate_profile(
    data: &Dataset,
    design: &DMatrix<f64>,
    x_new: &DVector<f64>,
    u1: usize,
    opts: &FitOptions,
) -> Result<ProfileEstimate> {
    let p = data.p();
    if x_new.len() != p {
        return Err(EnvError::DimensionMismatch {
            context: "profile x_new".into(),
            expected: p.to_string(),
            found: x_new.len().to_string(),
        });
    }
    let mode = InterceptMode::Model3;
    let ctx = CmContext::new(data, design, mode)?;
    let cm = cm_from_context(&ctx);
    let u = &ctx.t.u;
    let pu = ctx.t.u_orth.projection();
    let n = data.n() as f64;
    let ybar = DVector::from_iterator(data.r(), data.y().column_iter().map(|c| c.sum() / n));
    let base_mean = &pu * ybar;
    let base_avar = symmetrize(&(&pu * &cm.sigma * &pu));

    let c1 = x_new - &ctx.m.x_bar;
    let scale = 1.0 + ctx.m.x_bar.norm();
    if c1.norm() <= 1e-12 * scale {
        return Ok(ProfileEstimate {
            x_new: x_new.clone(),
            u1,
            mean: base_mean.clone(),
            avar: base_avar.clone(),
            mean_cm: base_mean,
            avar_cm: base_avar,
            n: data.n(),
        });
    }
    let c1 = DMatrix::from_column_slice(p, 1, c1.as_slice());
    let fit = fit_contrast(data, design, &c1, u1, mode, opts)?;
    let mean = &base_mean + u * fit.alpha1.column(0);
    let mean_cm = &base_mean + u * fit.alpha1_cm.column(0);
    let avar = symmetrize(&(&base_avar + &fit.avar_ualpha1));
    let avar_cm = symmetrize(&(&base_avar + lift_avar(&fit.avar_alpha1_cm, u, 1)));
    Ok(ProfileEstimate { x_new: x_new.clone(), u1, mean, avar, mean_cm, avar_cm, n: data.n() })
}
