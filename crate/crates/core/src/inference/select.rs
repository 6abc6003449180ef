use crate::error::{EnvError, Result};
use crate::estimators::{ecm_from_context, fit_em, secm_from_context, secm_identifiable, CmContext, EnvelopeFit, FitOptions};
use crate::model::{Dataset, InterceptMode};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Envelope family searched by [`select_dimension`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeKind {
    Em,
    Ecm,
    Secm,
}

/// BIC of one candidate dimension. Failed candidates keep the error text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionScore {
    pub dim: usize,
    pub loglik: Option<f64>,
    pub n_params: Option<usize>,
    pub bic: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Selection {
    pub kind: EnvelopeKind,
    pub dim: usize,
    pub fit: EnvelopeFit,
    pub trace: Vec<DimensionScore>,
}

/// Fits every admissible dimension and returns the one with the smallest
/// BIC (ties go to the smaller dimension). `em` ranges over `0..=r`, `ecm`
/// over `0..=k` and `secm` over the identifiable `v` in `1..=k`.
pub fn select_dimension(
    data: &Dataset,
    kind: EnvelopeKind,
    design: Option<&DMatrix<f64>>,
    mode: InterceptMode,
    opts: &FitOptions,
) -> Result<Selection> {
    let fits: Vec<(usize, Result<EnvelopeFit>)> = match kind {
        EnvelopeKind::Em => (0..=data.r()).into_par_iter().map(|u| (u, fit_em(data, u, opts))).collect(),
        EnvelopeKind::Ecm | EnvelopeKind::Secm => {
            let u = design.ok_or_else(|| EnvError::InvalidSpec(format!("{kind:?} selection needs a design matrix U")))?;
            let ctx = CmContext::new(data, u, mode)?;
            let (k, p) = (ctx.k(), ctx.p());
            let dims: Vec<usize> = if kind == EnvelopeKind::Ecm {
                (0..=k).collect()
            } else {
                (1..=k).filter(|&v| secm_identifiable(p, k, v)).collect()
            };
            dims.into_par_iter()
                .map(|d| {
                    let fit = if kind == EnvelopeKind::Ecm {
                        ecm_from_context(&ctx, d, opts)
                    } else {
                        secm_from_context(&ctx, d, opts)
                    };
                    (d, fit)
                })
                .collect()
        }
    };
    let mut trace = Vec::with_capacity(fits.len());
    let mut best: Option<EnvelopeFit> = None;
    let mut last_err = None;
    for (dim, res) in fits {
        match res {
            Ok(fit) => {
                trace.push(DimensionScore {
                    dim,
                    loglik: Some(fit.loglik),
                    n_params: Some(fit.n_params),
                    bic: Some(fit.bic),
                    error: None,
                });
                if best.as_ref().is_none_or(|b| fit.bic < b.bic) {
                    best = Some(fit);
                }
            }
            Err(e) => {
                log::warn!("{kind:?} dimension {dim} skipped: {e}");
                trace.push(DimensionScore { dim, loglik: None, n_params: None, bic: None, error: Some(e.to_string()) });
                last_err = Some(e);
            }
        }
    }
    match best {
        Some(fit) => Ok(Selection { kind, dim: fit.dim.unwrap_or(0), fit, trace }),
        None => Err(last_err.unwrap_or_else(|| EnvError::InvalidSpec("no admissible dimension".into()))),
    }
}
