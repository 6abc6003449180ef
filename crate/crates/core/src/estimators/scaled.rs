use super::avar::{jacobian_sandwich, EnvelopeParams};
use super::constrained::CmContext;
use super::{EnvelopeFit, FitOptions, Method, OptimizerSummary};
use crate::error::{EnvError, Result};
use crate::linalg::{complete_basis, minimize_with_starts, spd_inverse, symmetrize, SemiOrthBasis, StiefelSolution, SymMatrix};
use crate::model::{Dataset, InterceptMode};
use nalgebra::{DMatrix, DVector};

/// `p (k - v) >= k - 1`, the identifiability condition of the scaled model.
pub fn secm_identifiable(p: usize, k: usize, v: usize) -> bool {
    v <= k && p * (k - v) >= k - 1
}

/// Scaled envelope estimator inside the constrained model. The response
/// coordinates are rescaled by `Lambda = diag(1, l_2, .., l_k)` before the
/// envelope of dimension `v` is fitted; `alpha = Lambda^{-1} P_Theta Lambda alpha_cm`.
pub fn fit_secm(data: &Dataset, u_design: &DMatrix<f64>, mode: InterceptMode, v: usize, opts: &FitOptions) -> Result<EnvelopeFit> {
    let ctx = CmContext::new(data, u_design, mode)?;
    secm_from_context(&ctx, v, opts)
}

struct ScaledObjective {
    m1: DMatrix<f64>,
    m2: DMatrix<f64>,
}

impl ScaledObjective {
    fn pair(&self, a: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let k = a.len();
        let s1 = DMatrix::from_fn(k, k, |i, j| a[i] * self.m1[(i, j)] * a[j]);
        let s2 = DMatrix::from_fn(k, k, |i, j| self.m2[(i, j)] / (a[i] * a[j]));
        (s1, s2)
    }

    fn value(&self, a: &DVector<f64>, g: &DMatrix<f64>) -> f64 {
        let (s1, s2) = self.pair(a);
        let f1 = crate::linalg::logdet_spd(&(g.transpose() * s1 * g), "");
        let f2 = crate::linalg::logdet_spd(&(g.transpose() * s2 * g), "");
        match (f1, f2) {
            (Ok(x), Ok(y)) => x + y,
            _ => f64::INFINITY,
        }
    }

    fn g_step(&self, a: &DVector<f64>, v: usize, warm: Option<&DMatrix<f64>>, opts: &FitOptions) -> Result<StiefelSolution> {
        let (s1, s2) = self.pair(a);
        let m1 = SymMatrix::from_symmetrized(&s1);
        let m2 = SymMatrix::from_symmetrized(&s2);
        let extra: Vec<DMatrix<f64>> = warm.into_iter().cloned().collect();
        minimize_with_starts(&m1, &m2, v, &opts.stiefel, &extra)
    }
}

/// Golden-section search on `log a_j` after a grid scan of width 8.
fn scale_step(obj: &ScaledObjective, a: &mut DVector<f64>, g: &DMatrix<f64>, j: usize) -> f64 {
    let base = a[j].ln();
    let eval = |t: f64, a: &DVector<f64>| {
        let mut b = a.clone();
        b[j] = t.exp();
        obj.value(&b, g)
    };
    let f0 = eval(base, a);
    const N: usize = 33;
    const HALF: f64 = 4.0;
    let step = 2.0 * HALF / (N - 1) as f64;
    let (mut best_t, mut best_f) = (base, f0);
    for i in 0..N {
        let t = base - HALF + i as f64 * step;
        let f = eval(t, a);
        if f < best_f {
            best_f = f;
            best_t = t;
        }
    }
    let (mut lo, mut hi) = (best_t - step, best_t + step);
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (eval(x1, a), eval(x2, a));
    for _ in 0..80 {
        if hi - lo < 1e-12 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = eval(x1, a);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = eval(x2, a);
        }
    }
    for (t, f) in [(x1, f1), (x2, f2)] {
        if f < best_f {
            best_f = f;
            best_t = t;
        }
    }
    if best_f < f0 {
        a[j] = best_t.exp();
        best_f
    } else {
        f0
    }
}

pub(crate) fn secm_from_context(ctx: &CmContext, v: usize, opts: &FitOptions) -> Result<EnvelopeFit> {
    let (n, k, p) = (ctx.n(), ctx.k(), ctx.p());
    if v == 0 || v > k {
        return Err(EnvError::InvalidDimension { context: "secm dimension v".into(), dim: v, lo: 1, hi: k });
    }
    if !secm_identifiable(p, k, v) {
        return Err(EnvError::Unidentifiable { p, k, v });
    }
    let obj = ScaledObjective {
        m1: ctx.m.s_d_given_xs.clone(),
        m2: spd_inverse(&ctx.m.s_d_given_s, "S_D|S")?,
    };
    let mut a = DVector::from_element(k, 1.0);
    let mut sol = obj.g_step(&a, v, None, opts)?;
    let mut g = sol.basis.matrix().clone();
    let mut f = obj.value(&a, &g);
    let mut converged = v == k && k == 1;
    let mut iters = 0;
    let mut rel = f64::INFINITY;
    while !converged && iters < opts.secm_max_iter {
        iters += 1;
        let f_prev = f;
        let a_prev = a.clone();
        for j in 1..k {
            f = scale_step(&obj, &mut a, &g, j);
        }
        let cand = obj.g_step(&a, v, Some(&g), opts)?;
        if cand.objective <= f {
            g = cand.basis.matrix().clone();
            f = obj.value(&a, &g);
            sol = cand;
        }
        // pattern move: keep stepping along the last change of log a while
        // the objective improves, which removes the zig-zag of plain
        // alternation when scales and basis are coupled
        let dir = a.map(f64::ln) - a_prev.map(f64::ln);
        let mut step = 1.0;
        while dir.amax() > 1e-12 && step <= 64.0 {
            let trial = (a.map(f64::ln) + &dir * step).map(f64::exp);
            let cand = obj.g_step(&trial, v, Some(&g), opts)?;
            if !(cand.objective < f) {
                break;
            }
            a = trial;
            g = cand.basis.matrix().clone();
            f = obj.value(&a, &g);
            sol = cand;
            step *= 2.0;
        }
        rel = (f_prev - f).abs() / f.abs().max(1.0);
        if rel <= opts.secm_tol {
            converged = true;
        }
    }
    if !converged {
        sol.converged = false;
        return Err(EnvError::NoConvergence { sweeps: iters, rel_change: rel, best: Box::new(sol) });
    }
    let theta_basis = SemiOrthBasis::new(g)?;
    let theta = theta_basis.matrix().clone();
    let theta0 = complete_basis(&theta_basis).into_matrix();
    let lam = DMatrix::from_diagonal(&a);
    let lam_inv = DMatrix::from_diagonal(&a.map(|x| 1.0 / x));
    let eta = theta.transpose() * &lam * &ctx.alpha_cm;
    let alpha = &lam_inv * &theta * &eta;
    let omega = symmetrize(&(theta.transpose() * &lam * &ctx.m.s_d_given_xs * &lam * &theta));
    let omega0 = symmetrize(&(theta0.transpose() * &lam * &ctx.m.s_d_given_s * &lam * &theta0));
    let d = a.map(|x| 1.0 / x);
    let params = EnvelopeParams { theta: &theta, theta0: &theta0, eta: &eta, omega: &omega, omega0: &omega0, d: Some(&d) };
    let sigma_d_given_s = params.sigma();
    let avar_alpha = jacobian_sandwich(&params.jacobian(), &ctx.m.s_x, &sigma_d_given_s)?;
    let loglik = ctx.c - n as f64 / 2.0 * (ctx.logdet_marginal + ctx.logdet_d_given_s()? + obj.value(&a, &theta));
    let n_params = ctx.base_params() + (k - 1) + p * v;
    let mut fit = ctx.assemble_fit(Method::Secm, Some(v), alpha, sigma_d_given_s, avar_alpha, loglik, n_params);
    let mut summary = OptimizerSummary::from(&sol);
    summary.objective = f;
    fit.basis = Some(theta_basis);
    fit.eta = Some(eta);
    fit.omega = Some(omega);
    fit.omega0 = Some(omega0);
    fit.scales = Some(a);
    fit.optimizer = Some(summary);
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifiability_condition() {
        assert!(secm_identifiable(1, 2, 1));
        assert!(!secm_identifiable(1, 3, 2));
        assert!(secm_identifiable(2, 3, 2) == (2 >= 2));
        assert!(!secm_identifiable(3, 3, 3));
    }

    #[test]
    fn unit_scales_reduce_to_envelope_objective() {
        let m1 = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.1, 0.3, 1.5, 0.2, -0.1, 0.2, 1.0]);
        let m2 = DMatrix::from_row_slice(3, 3, &[0.8, -0.2, 0.1, -0.2, 1.2, 0.0, 0.1, 0.0, 0.6]);
        let obj = ScaledObjective { m1: m1.clone(), m2: m2.clone() };
        let g = crate::linalg::thin_q(&DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 2.0, -1.0, 1.0]));
        let plain = crate::linalg::envelope_objective(&g, &SymMatrix::new(m1).unwrap(), &SymMatrix::new(m2).unwrap()).unwrap();
        let scaled = obj.value(&DVector::from_element(3, 1.0), &g);
        assert!((plain - scaled).abs() < 1e-12);
    }
}
