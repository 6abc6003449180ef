use crate::error::{EnvError, Result};
use crate::estimators::EnvelopeFit;
use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided normal p-values for the entries of `beta_hat`.
#[derive(Debug, Clone, Serialize)]
pub struct WaldResult {
    #[serde(with = "crate::serde_mat::mat")]
    pub p_values: DMatrix<f64>,
    /// Entries whose variance was a small negative number clipped to zero.
    pub flagged: Vec<(usize, usize)>,
}

const NEG_TOL: f64 = 1e-12;

/// `p_ij = 2 (1 - Phi(|beta_ij| / se_ij))` with `se_ij = sqrt(avar_ii / n)`.
pub fn wald_pvalues(fit: &EnvelopeFit) -> Result<WaldResult> {
    let (r, p) = (fit.r, fit.p);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut flagged = Vec::new();
    let mut out = DMatrix::zeros(r, p);
    for j in 0..p {
        for i in 0..r {
            let idx = i + j * r;
            let var = fit.avar_beta[(idx, idx)];
            if var < -NEG_TOL {
                return Err(EnvError::DegenerateVariance { index: idx, value: var });
            }
            let b = fit.beta[(i, j)];
            if var <= 0.0 {
                flagged.push((i, j));
                out[(i, j)] = if b == 0.0 { 1.0 } else { 0.0 };
                continue;
            }
            let se = (var / fit.n as f64).sqrt();
            let z = (b / se).abs();
            out[(i, j)] = (2.0 * normal.sf(z)).clamp(0.0, 1.0);
        }
    }
    Ok(WaldResult { p_values: out, flagged })
}
