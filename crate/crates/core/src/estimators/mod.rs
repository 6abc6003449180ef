//! Estimators of the regression coefficient `beta` in `Y = beta0 + beta X + e`:
//! unrestricted (`um`), constrained to `span(U)` (`cm`), envelope (`em`),
//! envelope within the constrained model (`ecm`) and its scaled version (`secm`).
//!
//! All asymptotic covariances refer to `sqrt(n) vec(beta_hat)` with
//! column-stacked `vec`, and use `S_X` (divisor `n`) for `Sigma_X`.

pub mod avar;
mod constrained;
mod scaled;
mod unconstrained;

pub use constrained::{fit_cm, fit_ecm};
pub(crate) use constrained::{cm_from_context, ecm_from_context, CmContext};
pub(crate) use scaled::secm_from_context;
pub use scaled::{fit_secm, secm_identifiable};
pub use unconstrained::{fit_em, fit_um};

use crate::linalg::{SemiOrthBasis, StiefelOptions, StiefelSolution};
use crate::model::InterceptMode;
use crate::serde_mat::{mat, opt_mat, opt_vector, vector};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Which estimator produced a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Um,
    Cm,
    Em,
    Ecm,
    Secm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Um => "um",
            Method::Cm => "cm",
            Method::Em => "em",
            Method::Ecm => "ecm",
            Method::Secm => "secm",
        }
    }

    /// Whether the method needs a within-subject design `U`.
    pub fn needs_design(self) -> bool {
        matches!(self, Method::Cm | Method::Ecm | Method::Secm)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "um" => Ok(Method::Um),
            "cm" => Ok(Method::Cm),
            "em" => Ok(Method::Em),
            "ecm" => Ok(Method::Ecm),
            "secm" => Ok(Method::Secm),
            other => Err(format!("unknown method `{other}` (use um, cm, em, ecm or secm)")),
        }
    }
}

/// Tuning shared by all fitting routines.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub stiefel: StiefelOptions,
    /// Relative objective change that ends the scaled alternating search.
    pub secm_tol: f64,
    pub secm_max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { stiefel: StiefelOptions::default(), secm_tol: 1e-8, secm_max_iter: 200 }
    }
}

/// Summary of the manifold optimization behind an envelope fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub objective: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub jitter: f64,
    pub start: String,
    pub trace: Vec<f64>,
}

impl From<&StiefelSolution> for OptimizerSummary {
    fn from(s: &StiefelSolution) -> Self {
        OptimizerSummary {
            objective: s.objective,
            sweeps: s.sweeps,
            converged: s.converged,
            jitter: s.jitter,
            start: s.start.clone(),
            trace: s.trace.clone(),
        }
    }
}

/// A fitted model. Fields that do not apply to a method are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub method: Method,
    pub intercept_mode: Option<InterceptMode>,
    pub n: usize,
    pub r: usize,
    pub p: usize,
    /// Number of columns of `U`.
    pub k: Option<usize>,
    /// Envelope dimension (`u` for em/ecm, `v` for secm).
    pub dim: Option<usize>,
    /// `r x p` coefficient matrix.
    #[serde(with = "mat")]
    pub beta: DMatrix<f64>,
    #[serde(with = "vector")]
    pub beta0: DVector<f64>,
    /// `k x p` coefficients in the coordinates of `U`.
    #[serde(with = "opt_mat")]
    pub alpha: Option<DMatrix<f64>>,
    /// Fitted response covariance.
    #[serde(with = "mat")]
    pub sigma: DMatrix<f64>,
    /// avar of `sqrt(n) vec(beta_hat)`, `rp x rp`.
    #[serde(with = "mat")]
    pub avar_beta: DMatrix<f64>,
    #[serde(with = "opt_mat")]
    pub avar_alpha: Option<DMatrix<f64>>,
    /// The within-subject design as supplied.
    #[serde(with = "opt_mat")]
    pub design: Option<DMatrix<f64>>,
    /// Envelope basis (`Gamma`, `Phi` or `Theta`).
    pub basis: Option<SemiOrthBasis>,
    #[serde(with = "opt_mat")]
    pub eta: Option<DMatrix<f64>>,
    #[serde(with = "opt_mat")]
    pub omega: Option<DMatrix<f64>>,
    #[serde(with = "opt_mat")]
    pub omega0: Option<DMatrix<f64>>,
    /// Coefficient of `Y_S` in the conditional model for `Y_D`.
    #[serde(with = "opt_mat")]
    pub ys_coef: Option<DMatrix<f64>>,
    /// Diagonal of the scaling matrix (secm only).
    #[serde(with = "opt_vector")]
    pub scales: Option<DVector<f64>>,
    pub loglik: f64,
    pub n_params: usize,
    pub bic: f64,
    pub optimizer: Option<OptimizerSummary>,
}

impl EnvelopeFit {
    pub(crate) fn finish_bic(&mut self) {
        self.bic = bic(self.loglik, self.n_params, self.n);
    }

    /// Standard errors of the entries of `beta_hat`, `sqrt(avar_ii / n)`,
    /// laid out like `beta`.
    pub fn standard_errors(&self) -> DMatrix<f64> {
        let n = self.n as f64;
        DMatrix::from_fn(self.r, self.p, |i, j| {
            let d = self.avar_beta[(i + j * self.r, i + j * self.r)];
            (d.max(0.0) / n).sqrt()
        })
    }

    /// Diagonal of `avar_beta` laid out like `beta`.
    pub fn avar_diag(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.r, self.p, |i, j| self.avar_beta[(i + j * self.r, i + j * self.r)])
    }
}

/// `-2 loglik + log(n) N`.
pub fn bic(loglik: f64, n_params: usize, n: usize) -> f64 {
    -2.0 * loglik + (n as f64).ln() * n_params as f64
}

pub(crate) fn gaussian_const(n: usize, r: usize) -> f64 {
    -(n as f64) * r as f64 / 2.0 * (1.0 + (2.0 * std::f64::consts::PI).ln())
}
