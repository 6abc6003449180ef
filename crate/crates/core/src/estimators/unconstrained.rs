use super::avar::envelope_avar;
use super::{gaussian_const, EnvelopeFit, FitOptions, Method, OptimizerSummary};
use crate::error::{EnvError, Result};
use crate::linalg::{complete_basis, kron, logdet_spd, minimize_envelope_objective, spd_inverse, symmetrize, SymMatrix};
use crate::model::{compute_full_moments, Dataset, FullMoments};
use nalgebra::DMatrix;

/// Ordinary least squares: `beta = S_YX S_X^{-1}`, `Sigma = S_Y|X`.
pub fn fit_um(data: &Dataset) -> Result<EnvelopeFit> {
    let fm = compute_full_moments(data)?;
    um_from_moments(&fm)
}

pub(crate) fn um_from_moments(fm: &FullMoments) -> Result<EnvelopeFit> {
    let (n, r, p) = (fm.n, fm.s_y.nrows(), fm.s_x.nrows());
    let sx_inv = spd_inverse(&fm.s_x, "S_X")?;
    let beta = &fm.s_yx * &sx_inv;
    let beta0 = &fm.y_bar - &beta * &fm.x_bar;
    let sigma = fm.s_y_given_x.clone();
    let loglik = gaussian_const(n, r) - n as f64 / 2.0 * logdet_spd(&sigma, "S_Y|X")?;
    let mut fit = EnvelopeFit {
        method: Method::Um,
        intercept_mode: None,
        n,
        r,
        p,
        k: None,
        dim: None,
        avar_beta: symmetrize(&kron(&sx_inv, &sigma)),
        beta,
        beta0,
        alpha: None,
        sigma,
        avar_alpha: None,
        design: None,
        basis: None,
        eta: None,
        omega: None,
        omega0: None,
        ys_coef: None,
        scales: None,
        loglik,
        n_params: r + r * p + r * (r + 1) / 2,
        bic: 0.0,
        optimizer: None,
    };
    fit.finish_bic();
    Ok(fit)
}

/// Response envelope estimator of dimension `u`: `Gamma` minimizes
/// `log|G^T S_Y|X G| + log|G^T S_Y^{-1} G|` and `beta = P_Gamma beta_um`.
pub fn fit_em(data: &Dataset, u: usize, opts: &FitOptions) -> Result<EnvelopeFit> {
    let fm = compute_full_moments(data)?;
    let (n, r, p) = (fm.n, fm.s_y.nrows(), fm.s_x.nrows());
    if u > r {
        return Err(EnvError::InvalidDimension { context: "em dimension u".into(), dim: u, lo: 0, hi: r });
    }
    let m1 = SymMatrix::named(fm.s_y_given_x.clone(), "S_Y|X")?;
    let s_y_inv = spd_inverse(&fm.s_y, "S_Y")?;
    let m2 = SymMatrix::named(s_y_inv, "S_Y^-1")?;
    let sol = minimize_envelope_objective(&m1, &m2, u, &opts.stiefel)?;
    let gamma = sol.basis.matrix().clone();
    let gamma0 = complete_basis(&sol.basis).into_matrix();
    let um = um_from_moments(&fm)?;
    let eta = gamma.transpose() * &um.beta;
    let beta = &gamma * &eta;
    let beta0 = &fm.y_bar - &beta * &fm.x_bar;
    let omega = symmetrize(&(gamma.transpose() * &fm.s_y_given_x * &gamma));
    let omega0 = symmetrize(&(gamma0.transpose() * &fm.s_y * &gamma0));
    let sigma = symmetrize(&(&gamma * &omega * gamma.transpose() + &gamma0 * &omega0 * gamma0.transpose()));
    let avar_beta = envelope_avar(&fm.s_x, &gamma, &gamma0, &eta, &omega, &omega0)?;
    let loglik = gaussian_const(n, r)
        - n as f64 / 2.0
            * (logdet_spd(&fm.s_y, "S_Y")? + logdet_spd(&omega, "Omega")? + ln_det_inv_reduced(&gamma, m2.as_matrix())?);
    let mut fit = EnvelopeFit {
        method: Method::Em,
        intercept_mode: None,
        n,
        r,
        p,
        k: None,
        dim: Some(u),
        beta,
        beta0,
        alpha: None,
        sigma,
        avar_beta,
        avar_alpha: None,
        design: None,
        basis: Some(sol.basis.clone()),
        eta: Some(eta),
        omega: Some(omega),
        omega0: Some(omega0),
        ys_coef: None,
        scales: None,
        loglik,
        n_params: r + p * u + r * (r + 1) / 2,
        bic: 0.0,
        optimizer: Some(OptimizerSummary::from(&sol)),
    };
    fit.finish_bic();
    Ok(fit)
}

/// `log|G^T M G|`, zero when `G` has no columns.
pub(crate) fn ln_det_inv_reduced(g: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<f64> {
    logdet_spd(&(g.transpose() * m * g), "G^T M G")
}
