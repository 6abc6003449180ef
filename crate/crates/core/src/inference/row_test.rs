use super::{TestKind, TestResult};
use crate::error::{EnvError, Result};
use crate::estimators::{ecm_from_context, CmContext, FitOptions};
use crate::linalg::{envelope_objective, hcat, minimize_with_starts, numerical_rank, spd_inverse, thin_q, SemiOrthBasis, SymMatrix};
use crate::model::{regression_residual_cov, Dataset, InterceptMode};
use crate::linalg::logdet_spd;
use nalgebra::DMatrix;

/// Likelihood-ratio test that the last `k2` rows of `alpha` vanish in the
/// envelope-constrained model of dimension `u`. Reorder the columns of `U`
/// to test other rows.
pub fn test_rows(
    data: &Dataset,
    design: &DMatrix<f64>,
    u: usize,
    k2: usize,
    mode: InterceptMode,
    opts: &FitOptions,
) -> Result<TestResult> {
    let ctx = CmContext::new(data, design, mode)?;
    let k = ctx.k();
    if u > k || k2 == 0 || k2 > k - u {
        return Err(EnvError::InvalidPartition(format!(
            "k2 = {k2} must satisfy 1 <= k2 <= k - u = {}",
            k.saturating_sub(u)
        )));
    }
    let alt = ecm_from_context(&ctx, u, opts)?;
    let k1 = k - k2;
    let n = ctx.n() as f64;
    let yd = &ctx.t.yd;
    let d1 = yd.columns(0, k1).into_owned();
    let d2 = yd.columns(k1, k2).into_owned();
    let s_d2_s = regression_residual_cov(&d2, &ctx.t.ys, "S_D2|S")?;
    let s_d1_d2s = regression_residual_cov(&d1, &hcat(&d2, &ctx.t.ys), "S_D1|(D2,S)")?;
    let s_d1_xs = ctx.m.s_d_given_xs.view((0, 0), (k1, k1)).into_owned();

    let m1 = SymMatrix::named(s_d1_xs, "S_D1|(X,S)")?;
    let m2 = SymMatrix::named(spd_inverse(&s_d1_d2s, "S_D1|(D2,S)")?, "S_D1|(D2,S)^-1")?;
    let f = if u == k1 {
        envelope_objective(SemiOrthBasis::identity(k1).matrix(), &m1, &m2)?
    } else {
        // the leading rows of the alternative's basis are a natural warm start
        let mut warm = Vec::new();
        if let Some(b) = &alt.basis {
            let top = b.matrix().rows(0, k1).into_owned();
            if numerical_rank(&top, 1e-8) == u {
                warm.push(thin_q(&top));
            }
        }
        minimize_with_starts(&m1, &m2, u, &opts.stiefel, &warm)?.objective
    };
    let null = ctx.c
        - n / 2.0
            * (ctx.logdet_marginal
                + logdet_spd(&s_d2_s, "S_D2|S")?
                + logdet_spd(&s_d1_d2s, "S_D1|(D2,S)")?
                + f);
    Ok(TestResult::from_logliks(TestKind::RowTest, null, alt.loglik, u * k2))
}
