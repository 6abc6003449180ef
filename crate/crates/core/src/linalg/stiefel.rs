use super::basis::complete_matrix;
use super::{hcat, polar_orthonormalize, spd_inverse, thin_q, SemiOrthBasis, SymMatrix};
use crate::error::{EnvError, Result};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

/// Controls for [`minimize_envelope_objective`].
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelOptions {
    /// Stop once a full sweep changes the objective by at most
    /// `tol * max(1, |f|)`.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Random orthonormal starts added to the six eigenvector starts.
    pub n_random_starts: usize,
    pub seed: u64,
    /// Add `1e-8 * trace(M) / r` to the diagonals of M1 and M2 when either
    /// is not numerically positive definite.
    pub jitter: bool,
    /// Points in the grid scan that precedes each great-circle line search.
    pub grid: usize,
}

impl Default for StiefelOptions {
    fn default() -> Self {
        StiefelOptions {
            tol: 1e-8,
            max_sweeps: 500,
            n_random_starts: 0,
            seed: 0,
            jitter: false,
            grid: 48,
        }
    }
}

/// Minimizer returned by [`minimize_envelope_objective`].
#[derive(Debug, Clone)]
pub struct StiefelSolution {
    pub basis: SemiOrthBasis,
    pub objective: f64,
    /// Objective after each sweep, starting with the value at the chosen start.
    pub trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Diagonal jitter factor that was applied (0 when none).
    pub jitter: f64,
    /// Label of the start the descent began from.
    pub start: String,
}

/// `log det(G^T M1 G) + log det(G^T M2 G)`. Fails with `NonPositiveDefinite`
/// when either reduced matrix is not positive definite.
pub fn envelope_objective(g: &DMatrix<f64>, m1: &SymMatrix, m2: &SymMatrix) -> Result<f64> {
    let r = m1.dim();
    if m2.dim() != r || g.nrows() != r {
        return Err(EnvError::DimensionMismatch {
            context: "envelope objective".into(),
            expected: format!("{r}x{r} matrices and {r} rows"),
            found: format!("M2 {0}x{0}, G {1} rows", m2.dim(), g.nrows()),
        });
    }
    let f = objective_raw(g, m1, m2);
    if f.is_finite() {
        Ok(f)
    } else {
        Err(EnvError::NonPositiveDefinite { what: "G^T M G".into() })
    }
}

fn objective_raw(g: &DMatrix<f64>, m1: &DMatrix<f64>, m2: &DMatrix<f64>) -> f64 {
    if g.ncols() == 0 {
        return 0.0;
    }
    let a = g.transpose() * m1 * g;
    let b = g.transpose() * m2 * g;
    match (logdet_or_inf(&a), logdet_or_inf(&b)) {
        (x, y) if x.is_finite() && y.is_finite() => x + y,
        _ => f64::INFINITY,
    }
}

fn logdet_or_inf(m: &DMatrix<f64>) -> f64 {
    super::logdet_spd(m, "").unwrap_or(f64::INFINITY)
}

/// Minimizes the envelope objective over `r x u` matrices with orthonormal
/// columns by blockwise coordinate descent: each column in turn is moved
/// on the unit sphere of the orthogonal complement of the other columns,
/// where the objective reduces to `log(w^T A1 w) + log(w^T A2 w)`.
///
/// Starts are the leading and trailing `u` eigenvectors of `M1`, `M2^{-1}`
/// and `M1 + M2^{-1}` plus optional random ones; descent runs from the
/// start with the lowest objective.
pub fn minimize_envelope_objective(
    m1: &SymMatrix,
    m2: &SymMatrix,
    u: usize,
    opts: &StiefelOptions,
) -> Result<StiefelSolution> {
    minimize_with_starts(m1, m2, u, opts, &[])
}

/// [`minimize_envelope_objective`] with extra candidate starts, used for
/// warm starts inside alternating schemes.
pub(crate) fn minimize_with_starts(
    m1: &SymMatrix,
    m2: &SymMatrix,
    u: usize,
    opts: &StiefelOptions,
    extra: &[DMatrix<f64>],
) -> Result<StiefelSolution> {
    let r = m1.dim();
    if m2.dim() != r {
        return Err(EnvError::DimensionMismatch {
            context: "envelope objective".into(),
            expected: format!("{r}x{r}"),
            found: format!("{0}x{0}", m2.dim()),
        });
    }
    if u > r {
        return Err(EnvError::InvalidDimension {
            context: "envelope dimension".into(),
            dim: u,
            lo: 0,
            hi: r,
        });
    }
    let (m1, m2, jitter) = regularize(m1, m2, opts.jitter)?;

    if u == 0 || u == r {
        let g = if u == 0 { DMatrix::zeros(r, 0) } else { DMatrix::identity(r, r) };
        let f = objective_raw(&g, &m1, &m2);
        return Ok(StiefelSolution {
            basis: SemiOrthBasis::new(g)?,
            objective: f,
            trace: vec![f],
            sweeps: 0,
            converged: true,
            jitter,
            start: "trivial".into(),
        });
    }

    let (mut g, start) = best_start(&m1, &m2, u, opts, extra)?;
    let mut f = objective_raw(&g, &m1, &m2);
    let mut trace = vec![f];
    let mut rel_change = f64::INFINITY;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let g_new = sweep(&g, &m1, &m2, opts, false)?;
        let f_new = objective_raw(&g_new, &m1, &m2);
        let (g_acc, f_acc) = if f_new <= f { (g_new, f_new) } else { (g.clone(), f) };
        rel_change = (f - f_acc).abs() / f_acc.abs().max(1.0);
        g = g_acc;
        f = f_acc;
        trace.push(f);
        if rel_change <= opts.tol {
            converged = true;
            break;
        }
    }
    if converged && opts.tol < POLISH_TOL {
        g = polish(g, &m1, &m2, opts)?;
        f = objective_raw(&g, &m1, &m2);
    }
    let solution = StiefelSolution {
        basis: SemiOrthBasis::new(g)?,
        objective: f,
        trace,
        sweeps,
        converged,
        jitter,
        start,
    };
    if converged {
        Ok(solution)
    } else {
        Err(EnvError::NoConvergence { sweeps, rel_change, best: Box::new(solution) })
    }
}

fn regularize(
    m1: &SymMatrix,
    m2: &SymMatrix,
    allow: bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let r = m1.dim();
    let ok = |m: &SymMatrix| m.is_positive_definite();
    if ok(m1) && ok(m2) {
        return Ok((m1.as_matrix().clone(), m2.as_matrix().clone(), 0.0));
    }
    if !allow {
        let what = if ok(m1) { "M2" } else { "M1" };
        return Err(EnvError::NonPositiveDefinite { what: what.into() });
    }
    const DELTA: f64 = 1e-8;
    let shift = |m: &SymMatrix| m.shifted(DELTA * m.trace().abs().max(f64::MIN_POSITIVE) / r as f64);
    let (a, b) = (shift(m1), shift(m2));
    if !a.is_positive_definite() || !b.is_positive_definite() {
        return Err(EnvError::NonPositiveDefinite { what: "M1 or M2 after jitter".into() });
    }
    log::warn!("envelope objective: applied diagonal jitter {DELTA:e} * trace / r");
    Ok((a.into_inner(), b.into_inner(), DELTA))
}

fn best_start(
    m1: &DMatrix<f64>,
    m2: &DMatrix<f64>,
    u: usize,
    opts: &StiefelOptions,
    extra: &[DMatrix<f64>],
) -> Result<(DMatrix<f64>, String)> {
    let r = m1.nrows();
    let m2inv = spd_inverse(m2, "M2")?;
    let sum = m1 + &m2inv;
    let mut cands: Vec<(String, DMatrix<f64>)> = Vec::new();
    for (name, m) in [("M1", m1), ("M2^-1", &m2inv), ("M1+M2^-1", &sum)] {
        let (_, vecs) = super::sym_eigen_desc(m);
        cands.push((format!("{name} leading"), vecs.columns(0, u).into_owned()));
        cands.push((format!("{name} trailing"), vecs.columns(r - u, u).into_owned()));
    }
    if opts.n_random_starts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for i in 0..opts.n_random_starts {
            let z = DMatrix::from_fn(r, u, |_, _| StandardNormal.sample(&mut rng));
            cands.push((format!("random {i}"), thin_q(&z)));
        }
    }
    for (i, g) in extra.iter().enumerate() {
        if g.shape() == (r, u) {
            cands.push((format!("supplied {i}"), g.clone()));
        }
    }
    let mut best: Option<(f64, usize)> = None;
    for (i, (_, g)) in cands.iter().enumerate() {
        let f = objective_raw(g, m1, m2);
        if f.is_finite() && best.map_or(true, |(bf, _)| f < bf) {
            best = Some((f, i));
        }
    }
    let (_, i) = best.ok_or_else(|| EnvError::Numerical("no start with finite objective".into()))?;
    let (name, g) = cands.swap_remove(i);
    Ok((g, name))
}

/// One pass over all columns.
/// Objective changes stop resolving the minimizer once the basis is within
/// about `sqrt(eps)` of it. Below this tolerance the objective-based loop
/// is followed by sweeps that follow the derivative until the basis stops
/// moving.
const POLISH_TOL: f64 = 1e-12;

fn polish(g: DMatrix<f64>, m1: &DMatrix<f64>, m2: &DMatrix<f64>, opts: &StiefelOptions) -> Result<DMatrix<f64>> {
    // coordinate sweeps need not shrink the gradient every time, so keep
    // the best iterate and stop after a few sweeps without a new best
    let mut best_gn = grad_norm(&g, m1, m2);
    let mut best = g.clone();
    let mut cur = g;
    let mut stale = 0;
    for _ in 0..100 {
        if !(best_gn > 1e-13) || stale >= 5 {
            break;
        }
        cur = sweep(&cur, m1, m2, opts, true)?;
        let gn = grad_norm(&cur, m1, m2);
        if gn < best_gn {
            best_gn = gn;
            best = cur.clone();
            stale = 0;
        } else {
            stale += 1;
        }
    }
    Ok(best)
}

/// Frobenius norm of `(I - G G^T)(M1 G (G^T M1 G)^{-1} + M2 G (G^T M2 G)^{-1})`,
/// half the Riemannian gradient of the objective.
fn grad_norm(g: &DMatrix<f64>, m1: &DMatrix<f64>, m2: &DMatrix<f64>) -> f64 {
    let part = |m: &DMatrix<f64>| {
        let mg = m * g;
        let inner = g.transpose() * &mg;
        spd_inverse(&inner, "").map(|inv| mg * inv)
    };
    match (part(m1), part(m2)) {
        (Ok(a), Ok(b)) => {
            let t = a + b;
            (&t - g * (g.transpose() * &t)).norm()
        }
        _ => f64::INFINITY,
    }
}

fn sweep(
    g: &DMatrix<f64>,
    m1: &DMatrix<f64>,
    m2: &DMatrix<f64>,
    opts: &StiefelOptions,
    exact: bool,
) -> Result<DMatrix<f64>> {
    let (r, u) = g.shape();
    let mut g = g.clone();
    for j in 0..u {
        let rest = drop_column(&g, j);
        let a1 = schur(m1, &rest)?;
        let a2 = schur(m2, &rest)?;
        let gj = g.column(j).into_owned();
        // basis of span(rest)^perp whose first vector is (+/-) g_j
        let b = if u == 1 {
            let c = complete_matrix(&DMatrix::from_column_slice(r, 1, gj.as_slice()));
            hcat(&DMatrix::from_column_slice(r, 1, gj.as_slice()), c.matrix())
        } else {
            let with = hcat(&rest, &DMatrix::from_column_slice(r, 1, gj.as_slice()));
            let c = complete_matrix(&with);
            hcat(&DMatrix::from_column_slice(r, 1, gj.as_slice()), c.matrix())
        };
        let t1 = b.transpose() * &a1 * &b;
        let t2 = b.transpose() * &a2 * &b;
        let m = b.ncols();
        let mut w = DVector::zeros(m);
        w[0] = 1.0;
        let w = sphere_descent(&t1, &t2, w, opts, exact);
        g.set_column(j, &(&b * w));
    }
    polar_orthonormalize(&g)
}

fn drop_column(g: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    g.clone().remove_column(j)
}

/// `M - M R (R^T M R)^{-1} R^T M`.
fn schur(m: &DMatrix<f64>, rest: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if rest.ncols() == 0 {
        return Ok(m.clone());
    }
    let mr = m * rest;
    let inner = rest.transpose() * &mr;
    let sol = super::spd_solve(&inner, &mr.transpose(), "R^T M R")?;
    Ok(super::symmetrize(&(m - &mr * sol)))
}

fn sphere_value(a1: &DMatrix<f64>, a2: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    let q1 = w.dot(&(a1 * w));
    let q2 = w.dot(&(a2 * w));
    if q1 > 0.0 && q2 > 0.0 {
        q1.ln() + q2.ln()
    } else {
        f64::INFINITY
    }
}

/// Descends `log(w^T A1 w) + log(w^T A2 w)` on the unit sphere with
/// great-circle line searches along the projected gradient and along each
/// coordinate axis.
fn sphere_descent(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    mut w: DVector<f64>,
    opts: &StiefelOptions,
    exact: bool,
) -> DVector<f64> {
    let m = w.len();
    if m <= 1 {
        return w;
    }
    let mut f = sphere_value(a1, a2, &w);
    let passes = if exact { 50 } else { 6 };
    for _pass in 0..passes {
        let f_start = f;
        let w_start = w.clone();
        let mut dirs: Vec<DVector<f64>> = Vec::with_capacity(m + 1);
        let (q1, q2) = (w.dot(&(a1 * &w)), w.dot(&(a2 * &w)));
        let grad = (a1 * &w) / q1 + (a2 * &w) / q2;
        dirs.push(grad);
        for l in 0..m {
            let mut e = DVector::zeros(m);
            e[l] = 1.0;
            dirs.push(e);
        }
        for d in dirs {
            let d = &d - &w * w.dot(&d);
            let nd = d.norm();
            if nd < 1e-10 {
                continue;
            }
            let d = d / nd;
            if let Some((w_new, f_new)) = line_search(a1, a2, &w, &d, f, opts.grid, exact) {
                w = w_new;
                f = f_new;
            }
        }
        if exact {
            if (&w - &w_start).amax() < 1e-15 {
                break;
            }
        } else if !(f_start - f > 0.1 * opts.tol * f.abs().max(1.0)) {
            break;
        }
    }
    w
}

/// Minimizes along `cos(t) w + sin(t) d`, `t` in `[-pi/2, pi/2)`.
/// Returns the new point only when it strictly improves on `f0`.
fn line_search(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    w: &DVector<f64>,
    d: &DVector<f64>,
    f0: f64,
    grid: usize,
    exact: bool,
) -> Option<(DVector<f64>, f64)> {
    let (aw1, ad1) = (a1 * w, a1 * d);
    let (aw2, ad2) = (a2 * w, a2 * d);
    let c1 = [w.dot(&aw1), w.dot(&ad1), d.dot(&ad1)];
    let c2 = [w.dot(&aw2), w.dot(&ad2), d.dot(&ad2)];
    let h = |t: f64| {
        let (c, s) = (t.cos(), t.sin());
        let q1 = c1[0] * c * c + 2.0 * c1[1] * c * s + c1[2] * s * s;
        let q2 = c2[0] * c * c + 2.0 * c2[1] * c * s + c2[2] * s * s;
        if q1 > 0.0 && q2 > 0.0 {
            q1.ln() + q2.ln()
        } else {
            f64::INFINITY
        }
    };
    let n = grid.max(8) & !1;
    let step = PI / n as f64;
    let mut best_k = n / 2;
    let mut best_v = h(0.0);
    for k in 0..n {
        let t = -PI / 2.0 + k as f64 * step;
        let v = h(t);
        if v < best_v {
            best_v = v;
            best_k = k;
        }
    }
    let center = -PI / 2.0 + best_k as f64 * step;
    let (mut t, mut v) = golden(&h, center - step, center + step, center, best_v);
    // h' = q1'/q1 + q2'/q2 with q'(t) = (c2 - c0) sin 2t + 2 c1 cos 2t
    let dh = |t: f64| {
        let (c, s) = (t.cos(), t.sin());
        let (s2, c2t) = ((2.0 * t).sin(), (2.0 * t).cos());
        let q1 = c1[0] * c * c + 2.0 * c1[1] * c * s + c1[2] * s * s;
        let q2 = c2[0] * c * c + 2.0 * c2[1] * c * s + c2[2] * s * s;
        ((c1[2] - c1[0]) * s2 + 2.0 * c1[1] * c2t) / q1 + ((c2[2] - c2[0]) * s2 + 2.0 * c2[1] * c2t) / q2
    };
    if let Some(root) = bisect_root(&dh, center - step, center + step) {
        let vr = h(root);
        // near the minimum h is flat to rounding, so the derivative root is
        // the more accurate location
        if exact || vr <= v {
            t = root;
            v = vr;
        }
    }
    let h0 = h(0.0);
    let better = if exact { v <= h0 && t != 0.0 } else { v < h0 };
    if better && v.is_finite() {
        let wn = w * t.cos() + d * t.sin();
        let wn = &wn / wn.norm();
        let fnew = sphere_value(a1, a2, &wn);
        if fnew < f0 || (exact && fnew <= f0 + 4.0 * f64::EPSILON * f0.abs().max(1.0)) {
            return Some((wn, fnew));
        }
    }
    None
}

/// Root of an increasing sign change of `g` in `[lo, hi]`, if bracketed.
fn bisect_root(g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (glo, ghi) = (g(lo), g(hi));
    if !(glo < 0.0 && ghi > 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn golden(h: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, t0: f64, v0: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = h(x1);
    let mut f2 = h(x2);
    for _ in 0..80 {
        if hi - lo < 1e-13 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = h(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = h(x2);
        }
    }
    let (t, v) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    if v < v0 {
        (t, v)
    } else {
        (t0, v0)
    }
}
