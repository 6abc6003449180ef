use super::avar::{envelope_avar, lift_avar};
use super::unconstrained::ln_det_inv_reduced;
use super::{gaussian_const, EnvelopeFit, FitOptions, Method, OptimizerSummary};
use crate::error::{EnvError, Result};
use crate::linalg::{complete_basis, kron, logdet_spd, minimize_envelope_objective, spd_inverse, symmetrize, SymMatrix};
use crate::model::{assemble_sigma, compute_moments, transform_responses, Dataset, InterceptMode, Moments, TransformedData};
use nalgebra::{DMatrix, DVector};

/// Quantities shared by the constrained estimators, the row test and the
/// contrast machinery.
#[derive(Debug, Clone)]
pub(crate) struct CmContext {
    pub t: TransformedData,
    pub m: Moments,
    pub alpha_cm: DMatrix<f64>,
    pub s_s_inv: DMatrix<f64>,
    /// `n log|W| - (nr/2)(1 + log 2 pi)`.
    pub c: f64,
    pub logdet_marginal: f64,
}

impl CmContext {
    pub fn new(data: &Dataset, u: &DMatrix<f64>, mode: InterceptMode) -> Result<Self> {
        let t = transform_responses(data, u)?;
        let m = compute_moments(&t, mode)?;
        let s_s_inv = spd_inverse(&m.s_s, "S_S").map_err(|_| EnvError::SingularMoment { which: "S_S".into() })?;
        let s_x_given_s_inv = spd_inverse(&m.s_x_given_s, "S_X|S").map_err(|_| EnvError::SingularDesign)?;
        let alpha_cm = (&m.s_dx - &m.s_ds * &s_s_inv * &m.s_sx) * s_x_given_s_inv;
        let n = t.n();
        let c = n as f64 * t.log_abs_det_w + gaussian_const(n, t.r());
        let logdet_marginal = logdet_spd(&m.s_s_marginal, "marginal moment of Y_S")?;
        Ok(CmContext { t, m, alpha_cm, s_s_inv, c, logdet_marginal })
    }

    pub fn n(&self) -> usize {
        self.t.n()
    }
    pub fn k(&self) -> usize {
        self.t.k()
    }
    pub fn r(&self) -> usize {
        self.t.r()
    }
    pub fn p(&self) -> usize {
        self.t.p()
    }

    /// `phi = (S_DS - alpha S_XS) S_S^{-1}`.
    pub fn ys_coef(&self, alpha: &DMatrix<f64>) -> DMatrix<f64> {
        (&self.m.s_ds - alpha * self.m.s_sx.transpose()) * &self.s_s_inv
    }

    pub fn intercept(&self, alpha: &DMatrix<f64>, phi: &DMatrix<f64>) -> DVector<f64> {
        let u = &self.t.u;
        let centered = &self.m.yd_bar - alpha * &self.m.x_bar;
        match self.m.mode {
            InterceptMode::Model3 => u * centered + self.t.u0.matrix() * &self.m.ys_bar,
            InterceptMode::Model2 => u * (centered - phi * &self.m.ys_bar),
        }
    }

    pub fn sigma(&self, phi: &DMatrix<f64>, sigma_d_given_s: &DMatrix<f64>) -> DMatrix<f64> {
        assemble_sigma(&self.t.u, &self.t.u0, phi, &self.m.s_s_marginal, sigma_d_given_s)
    }

    /// Parameters other than those of `alpha`: intercepts and `Sigma`.
    pub fn base_params(&self) -> usize {
        let (r, k) = (self.r(), self.k());
        let extra = if self.m.mode == InterceptMode::Model3 { r - k } else { 0 };
        k + r * (r + 1) / 2 + extra
    }

    /// `log|S_D|S|`.
    pub fn logdet_d_given_s(&self) -> Result<f64> {
        logdet_spd(&self.m.s_d_given_s, "S_D|S")
    }

    #[allow(clippy::too_many_arguments)]
    pub fn assemble_fit(
        &self,
        method: Method,
        dim: Option<usize>,
        alpha: DMatrix<f64>,
        sigma_d_given_s: DMatrix<f64>,
        avar_alpha: DMatrix<f64>,
        loglik: f64,
        n_params: usize,
    ) -> EnvelopeFit {
        let u = &self.t.u;
        let phi = self.ys_coef(&alpha);
        let beta0 = self.intercept(&alpha, &phi);
        let sigma = self.sigma(&phi, &sigma_d_given_s);
        let mut fit = EnvelopeFit {
            method,
            intercept_mode: Some(self.m.mode),
            n: self.n(),
            r: self.r(),
            p: self.p(),
            k: Some(self.k()),
            dim,
            beta: u * &alpha,
            beta0,
            alpha: Some(alpha),
            sigma,
            avar_beta: lift_avar(&avar_alpha, u, self.p()),
            avar_alpha: Some(avar_alpha),
            design: Some(u.clone()),
            basis: None,
            eta: None,
            omega: None,
            omega0: None,
            ys_coef: Some(phi),
            scales: None,
            loglik,
            n_params,
            bic: 0.0,
            optimizer: None,
        };
        fit.finish_bic();
        fit
    }
}

/// Constrained estimator: `beta = U alpha` with `alpha` from the regression
/// of `Y_D` on `(X, Y_S)`.
pub fn fit_cm(data: &Dataset, u: &DMatrix<f64>, mode: InterceptMode) -> Result<EnvelopeFit> {
    let ctx = CmContext::new(data, u, mode)?;
    Ok(cm_from_context(&ctx))
}

pub(crate) fn cm_from_context(ctx: &CmContext) -> EnvelopeFit {
    let (n, k, p) = (ctx.n(), ctx.k(), ctx.p());
    let sx_inv = spd_inverse(&ctx.m.s_x, "S_X").expect("S_X checked positive definite");
    let sdxs = ctx.m.s_d_given_xs.clone();
    let avar_alpha = symmetrize(&kron(&sx_inv, &sdxs));
    let loglik = ctx.c
        - n as f64 / 2.0
            * (ctx.logdet_marginal + logdet_spd(&sdxs, "S_D|(X,S)").expect("checked positive definite"));
    ctx.assemble_fit(Method::Cm, None, ctx.alpha_cm.clone(), sdxs, avar_alpha, loglik, ctx.base_params() + p * k)
}

/// Envelope of dimension `u` inside the constrained model: `Phi` minimizes
/// `log|G^T S_D|(X,S) G| + log|G^T S_D|S^{-1} G|` and `alpha = P_Phi alpha_cm`.
pub fn fit_ecm(data: &Dataset, u_design: &DMatrix<f64>, mode: InterceptMode, u: usize, opts: &FitOptions) -> Result<EnvelopeFit> {
    let ctx = CmContext::new(data, u_design, mode)?;
    ecm_from_context(&ctx, u, opts)
}

pub(crate) fn ecm_from_context(ctx: &CmContext, u: usize, opts: &FitOptions) -> Result<EnvelopeFit> {
    let (n, k, p) = (ctx.n(), ctx.k(), ctx.p());
    if u > k {
        return Err(EnvError::InvalidDimension { context: "ecm dimension u".into(), dim: u, lo: 0, hi: k });
    }
    let m1 = SymMatrix::named(ctx.m.s_d_given_xs.clone(), "S_D|(X,S)")?;
    let m2 = SymMatrix::named(spd_inverse(&ctx.m.s_d_given_s, "S_D|S")?, "S_D|S^-1")?;
    let sol = minimize_envelope_objective(&m1, &m2, u, &opts.stiefel)?;
    let phi = sol.basis.matrix().clone();
    let phi0 = complete_basis(&sol.basis).into_matrix();
    let eta = phi.transpose() * &ctx.alpha_cm;
    let alpha = &phi * &eta;
    let omega = symmetrize(&(phi.transpose() * m1.as_matrix() * &phi));
    let omega0 = symmetrize(&(phi0.transpose() * &ctx.m.s_d_given_s * &phi0));
    let sigma_d_given_s = symmetrize(&(&phi * &omega * phi.transpose() + &phi0 * &omega0 * phi0.transpose()));
    let avar_alpha = envelope_avar(&ctx.m.s_x, &phi, &phi0, &eta, &omega, &omega0)?;
    let loglik = ctx.c
        - n as f64 / 2.0
            * (ctx.logdet_marginal
                + ctx.logdet_d_given_s()?
                + ln_det_inv_reduced(&phi, m1.as_matrix())?
                + ln_det_inv_reduced(&phi, m2.as_matrix())?);
    let mut fit = ctx.assemble_fit(Method::Ecm, Some(u), alpha, sigma_d_given_s, avar_alpha, loglik, ctx.base_params() + p * u);
    fit.basis = Some(sol.basis.clone());
    fit.eta = Some(eta);
    fit.omega = Some(omega);
    fit.omega0 = Some(omega0);
    fit.optimizer = Some(OptimizerSummary::from(&sol));
    Ok(fit)
}
