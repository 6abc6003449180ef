use super::scenario::{Design, Generator, ScenarioSpec, TheoreticalAvar};
use crate::error::{EnvError, Result};
use crate::estimators::{fit_cm, fit_ecm, fit_em, fit_um, EnvelopeFit, FitOptions};
use crate::inference::{chi2_cdf, select_dimension, test_rows, EnvelopeKind};
use crate::linalg::{subspace_distance, SemiOrthBasis};
use crate::model::{Dataset, InterceptMode};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Envelope dimension used inside a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimChoice {
    Bic,
    Fixed(usize),
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub fit: FitOptions,
    pub dim: DimChoice,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions { fit: FitOptions::default(), dim: DimChoice::Bic }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Efficiency,
    BiasSweep,
    Ecm,
    SizeCalibration,
}

/// Monte Carlo summary of one estimator of `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub name: String,
    pub reps_ok: usize,
    pub failures: usize,
    /// Mean over replicates of `(rp)^{-1} sum (beta_hat_ij - beta_ij)^2`.
    pub mse_mean: f64,
    /// Min, lower quartile, median, upper quartile and max of the MSE.
    pub mse_quantiles: [f64; 5],
    /// Mean over replicates and entries of the plug-in avar diagonal.
    pub mean_plugin_avar: f64,
    pub theoretical_avar: Option<f64>,
    /// Mean over entries of the MC variance of `sqrt(n) beta_hat_ij`.
    pub mc_variance: f64,
    pub max_abs_bias: f64,
    /// Largest `|mean bias| / MC standard error` over entries.
    pub max_bias_z: f64,
    /// Bias pooled over all entries of `beta` and its z score against the
    /// replicate-to-replicate spread of the per-replicate pooled error.
    pub pooled_bias: f64,
    pub pooled_bias_z: f64,
    /// Mean subspace distance between the fitted and true envelopes.
    pub mean_subspace_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionFrequency {
    pub estimator: String,
    pub counts: BTreeMap<usize, usize>,
}

/// One point of the MSE-versus-`k` curve of the bias sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub mse_mean: f64,
    pub mse_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub u: usize,
    pub k2: usize,
    pub df: usize,
    pub failures: usize,
    pub rejection_rate: f64,
    pub mean_statistic: f64,
    /// Kolmogorov-Smirnov distance between the statistics and chi-squared(df).
    pub ks_distance: f64,
    /// Statistics in replicate order.
    pub statistics: Vec<f64>,
}

/// Serializable result of a study. Wall-clock time is kept out of the
/// serialized form so repeated runs compare byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationReport {
    pub study: StudyKind,
    pub spec: ScenarioSpec,
    pub reps: usize,
    pub theoretical: Option<TheoreticalAvar>,
    pub estimators: Vec<EstimatorSummary>,
    pub dimension_frequencies: Vec<DimensionFrequency>,
    #[serde(default)]
    pub curve: Vec<CurvePoint>,
    #[serde(default)]
    pub size: Option<SizeSummary>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl SimulationReport {
    pub fn estimator(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.name == name)
    }
}

/// Outcome of one fit within one replicate.
#[derive(Debug, Clone)]
struct FitRecord {
    beta: DMatrix<f64>,
    mse: f64,
    plugin_avar: f64,
    dim: Option<usize>,
    distance: Option<f64>,
}

fn record(fit: &EnvelopeFit, truth_beta: &DMatrix<f64>, true_basis: Option<&SemiOrthBasis>) -> FitRecord {
    let diff = &fit.beta - truth_beta;
    let mse = diff.norm_squared() / diff.len() as f64;
    let distance = match (true_basis, &fit.basis) {
        (Some(t), Some(b)) if t.ncols() == b.ncols() => subspace_distance(t, b).ok(),
        _ => None,
    };
    FitRecord { beta: fit.beta.clone(), mse, plugin_avar: fit.avar_beta.diagonal().mean(), dim: fit.dim, distance }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(
    name: &str,
    records: &[Option<FitRecord>],
    truth_beta: &DMatrix<f64>,
    n: usize,
    theoretical: Option<f64>,
) -> EstimatorSummary {
    let ok: Vec<&FitRecord> = records.iter().flatten().collect();
    let m = ok.len();
    let failures = records.len() - m;
    if m == 0 {
        return EstimatorSummary {
            name: name.into(),
            reps_ok: 0,
            failures,
            mse_mean: f64::NAN,
            mse_quantiles: [f64::NAN; 5],
            mean_plugin_avar: f64::NAN,
            theoretical_avar: theoretical,
            mc_variance: f64::NAN,
            max_abs_bias: f64::NAN,
            max_bias_z: f64::NAN,
            pooled_bias: f64::NAN,
            pooled_bias_z: f64::NAN,
            mean_subspace_distance: None,
        };
    }
    let mf = m as f64;
    let mut mses: Vec<f64> = ok.iter().map(|r| r.mse).collect();
    let mse_mean = mses.iter().sum::<f64>() / mf;
    mses.sort_by(f64::total_cmp);
    let mse_quantiles = [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile(&mses, q));
    let mean_plugin_avar = ok.iter().map(|r| r.plugin_avar).sum::<f64>() / mf;

    let mut mean = DMatrix::zeros(truth_beta.nrows(), truth_beta.ncols());
    for r in &ok {
        mean += &r.beta;
    }
    mean /= mf;
    let mut var = DMatrix::zeros(mean.nrows(), mean.ncols());
    if m > 1 {
        for r in &ok {
            var += (&r.beta - &mean).map(|d| d * d);
        }
        var /= mf - 1.0;
    }
    let mc_variance = var.mean() * n as f64;
    let bias = &mean - truth_beta;
    let max_abs_bias = bias.amax();
    let max_bias_z = if m > 1 {
        bias.iter()
            .zip(var.iter())
            .map(|(b, v)| {
                let se = (v / mf).sqrt();
                if se > 0.0 { b.abs() / se } else { 0.0 }
            })
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let pooled: Vec<f64> = ok.iter().map(|r| (&r.beta - truth_beta).mean()).collect();
    let pooled_bias = pooled.iter().sum::<f64>() / mf;
    let pooled_bias_z = if m > 1 {
        let v = pooled.iter().map(|x| (x - pooled_bias).powi(2)).sum::<f64>() / (mf - 1.0);
        let se = (v / mf).sqrt();
        if se > 0.0 { pooled_bias.abs() / se } else { 0.0 }
    } else {
        0.0
    };
    let dists: Vec<f64> = ok.iter().filter_map(|r| r.distance).collect();
    let mean_subspace_distance = if dists.is_empty() { None } else { Some(dists.iter().sum::<f64>() / dists.len() as f64) };
    EstimatorSummary {
        name: name.into(),
        reps_ok: m,
        failures,
        mse_mean,
        mse_quantiles,
        mean_plugin_avar,
        theoretical_avar: theoretical,
        mc_variance,
        max_abs_bias,
        max_bias_z,
        pooled_bias,
        pooled_bias_z,
        mean_subspace_distance,
    }
}

fn dim_frequency(name: &str, records: &[Option<FitRecord>]) -> DimensionFrequency {
    let mut counts = BTreeMap::new();
    for r in records.iter().flatten() {
        if let Some(d) = r.dim {
            *counts.entry(d).or_insert(0) += 1;
        }
    }
    DimensionFrequency { estimator: name.into(), counts }
}

fn keep(name: &str, rep: usize, res: Result<FitRecord>) -> Option<FitRecord> {
    match res {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("replicate {rep}: {name} failed: {e}");
            None
        }
    }
}

fn fit_em_with(data: &Dataset, opts: &StudyOptions) -> Result<EnvelopeFit> {
    match opts.dim {
        DimChoice::Bic => Ok(select_dimension(data, EnvelopeKind::Em, None, InterceptMode::Model3, &opts.fit)?.fit),
        DimChoice::Fixed(u) => fit_em(data, u, &opts.fit),
    }
}

fn fit_ecm_with(data: &Dataset, design: &DMatrix<f64>, opts: &StudyOptions) -> Result<EnvelopeFit> {
    match opts.dim {
        DimChoice::Bic => {
            Ok(select_dimension(data, EnvelopeKind::Ecm, Some(design), InterceptMode::Model3, &opts.fit)?.fit)
        }
        DimChoice::Fixed(u) => fit_ecm(data, design, InterceptMode::Model3, u, &opts.fit),
    }
}

fn require(spec: &ScenarioSpec, generator: Generator, what: &str) -> Result<()> {
    if spec.generator != generator {
        return Err(EnvError::InvalidSpec(format!("{what} needs the {generator:?} generator")));
    }
    if spec.n == 0 {
        return Err(EnvError::InvalidSpec("n must be positive".into()));
    }
    Ok(())
}

fn check_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(EnvError::InvalidSpec("reps must be at least 1".into()));
    }
    Ok(())
}

/// Fits `um`, `cm` with the true `U` and `em` on each replicate of an
/// envelope-generator design.
pub fn run_efficiency_study(spec: &ScenarioSpec, reps: usize, opts: &StudyOptions) -> Result<SimulationReport> {
    let start = std::time::Instant::now();
    check_reps(reps)?;
    require(spec, Generator::Envelope, "the efficiency study")?;
    let design = Design::new(spec)?;
    let theory = design.theoretical_avars()?;
    let truth = &design.truth;
    let gamma = SemiOrthBasis::new(truth.gamma.clone().expect("envelope truth"))?;
    let rows: Vec<[Option<FitRecord>; 3]> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let data = match design.dataset(rep as u64) {
                Ok(d) => d,
                Err(e) => {
                    log::warn!("replicate {rep}: {e}");
                    return [None, None, None];
                }
            };
            let um = keep("um", rep, fit_um(&data).map(|f| record(&f, &truth.beta, None)));
            let cm = keep(
                "cm",
                rep,
                fit_cm(&data, &truth.design, InterceptMode::Model3).map(|f| record(&f, &truth.beta, None)),
            );
            let em = keep("em", rep, fit_em_with(&data, opts).map(|f| record(&f, &truth.beta, Some(&gamma))));
            [um, cm, em]
        })
        .collect();
    let col = |j: usize| rows.iter().map(|r| r[j].clone()).collect::<Vec<_>>();
    let (um, cm, em) = (col(0), col(1), col(2));
    let n = spec.n;
    Ok(SimulationReport {
        study: StudyKind::Efficiency,
        spec: spec.clone(),
        reps,
        theoretical: Some(theory),
        estimators: vec![
            summarize("um", &um, &truth.beta, n, Some(theory.um)),
            summarize("cm", &cm, &truth.beta, n, Some(theory.cm)),
            summarize("em", &em, &truth.beta, n, Some(theory.envelope)),
        ],
        dimension_frequencies: vec![dim_frequency("em", &em)],
        curve: Vec::new(),
        size: None,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// MSE of `cm` with `U = (Gamma, Gamma0)(I_k, 0)^T` over `k_grid`, with
/// `um` and `em` as reference estimators fitted to the same data.
pub fn run_bias_sweep(spec: &ScenarioSpec, k_grid: &[usize], reps: usize, opts: &StudyOptions) -> Result<SimulationReport> {
    let start = std::time::Instant::now();
    check_reps(reps)?;
    require(spec, Generator::Envelope, "the bias sweep")?;
    if k_grid.is_empty() || k_grid.iter().any(|&k| k == 0 || k > spec.r) {
        return Err(EnvError::InvalidSpec(format!("k grid must be non-empty within 1..={}", spec.r)));
    }
    let design = Design::new(spec)?;
    let truth = &design.truth;
    let o = truth.rotation.as_ref().expect("envelope truth");
    let gamma = SemiOrthBasis::new(truth.gamma.clone().expect("envelope truth"))?;
    let rows: Vec<(Option<FitRecord>, Option<FitRecord>, Vec<Option<f64>>)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let data = match design.dataset(rep as u64) {
                Ok(d) => d,
                Err(e) => {
                    log::warn!("replicate {rep}: {e}");
                    return (None, None, vec![None; k_grid.len()]);
                }
            };
            let um = keep("um", rep, fit_um(&data).map(|f| record(&f, &truth.beta, None)));
            let em = keep("em", rep, fit_em_with(&data, opts).map(|f| record(&f, &truth.beta, Some(&gamma))));
            let cms = k_grid
                .iter()
                .map(|&k| {
                    let u = o.columns(0, k).into_owned();
                    keep("cm", rep, fit_cm(&data, &u, InterceptMode::Model3).map(|f| record(&f, &truth.beta, None)))
                        .map(|r| r.mse)
                })
                .collect();
            (um, em, cms)
        })
        .collect();
    let um: Vec<_> = rows.iter().map(|r| r.0.clone()).collect();
    let em: Vec<_> = rows.iter().map(|r| r.1.clone()).collect();
    let curve = k_grid
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let v: Vec<f64> = rows.iter().filter_map(|r| r.2[i]).collect();
            let m = v.len() as f64;
            let mean = v.iter().sum::<f64>() / m;
            let se = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
            } else {
                0.0
            };
            CurvePoint { k, mse_mean: mean, mse_se: se }
        })
        .collect();
    Ok(SimulationReport {
        study: StudyKind::BiasSweep,
        spec: spec.clone(),
        reps,
        theoretical: None,
        estimators: vec![summarize("um", &um, &truth.beta, spec.n, None), summarize("em", &em, &truth.beta, spec.n, None)],
        dimension_frequencies: vec![dim_frequency("em", &em)],
        curve,
        size: None,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Fits `cm` and `ecm` with the true `U` on a conditional-generator design.
pub fn run_ecm_study(spec: &ScenarioSpec, reps: usize, opts: &StudyOptions) -> Result<SimulationReport> {
    let start = std::time::Instant::now();
    check_reps(reps)?;
    require(spec, Generator::Conditional, "the ecm study")?;
    let design = Design::new(spec)?;
    let theory = design.theoretical_avars()?;
    let truth = &design.truth;
    let phi = SemiOrthBasis::from_span(truth.phi.as_ref().expect("conditional truth"))?;
    let rows: Vec<[Option<FitRecord>; 2]> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let data = match design.dataset(rep as u64) {
                Ok(d) => d,
                Err(e) => {
                    log::warn!("replicate {rep}: {e}");
                    return [None, None];
                }
            };
            let cm = keep(
                "cm",
                rep,
                fit_cm(&data, &truth.design, InterceptMode::Model3).map(|f| record(&f, &truth.beta, None)),
            );
            let ecm = keep(
                "ecm",
                rep,
                fit_ecm_with(&data, &truth.design, opts).map(|f| record(&f, &truth.beta, Some(&phi))),
            );
            [cm, ecm]
        })
        .collect();
    let cm: Vec<_> = rows.iter().map(|r| r[0].clone()).collect();
    let ecm: Vec<_> = rows.iter().map(|r| r[1].clone()).collect();
    Ok(SimulationReport {
        study: StudyKind::Ecm,
        spec: spec.clone(),
        reps,
        theoretical: Some(theory),
        estimators: vec![
            summarize("cm", &cm, &truth.beta, spec.n, Some(theory.cm)),
            summarize("ecm", &ecm, &truth.beta, spec.n, Some(theory.envelope)),
        ],
        dimension_frequencies: vec![dim_frequency("ecm", &ecm)],
        curve: Vec::new(),
        size: None,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Row test of the last `k2` rows of `alpha` at the true dimension `u`,
/// repeated over replicates, compared with chi-squared(u k2).
pub fn run_size_calibration(spec: &ScenarioSpec, k2: usize, reps: usize, opts: &StudyOptions) -> Result<SimulationReport> {
    let start = std::time::Instant::now();
    check_reps(reps)?;
    require(spec, Generator::Conditional, "the row-test calibration")?;
    let design = Design::new(spec)?;
    let truth = &design.truth;
    let u = spec.u;
    if k2 == 0 || k2 > spec.q - u {
        return Err(EnvError::InvalidPartition(format!("k2 = {k2} must lie in 1..={}", spec.q - u)));
    }
    let stats: Vec<Option<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let res = design
                .dataset(rep as u64)
                .and_then(|d| test_rows(&d, &truth.design, u, k2, InterceptMode::Model3, &opts.fit));
            match res {
                Ok(t) => Some(t.statistic),
                Err(e) => {
                    log::warn!("replicate {rep}: row test failed: {e}");
                    None
                }
            }
        })
        .collect();
    let ok: Vec<f64> = stats.iter().flatten().copied().collect();
    let df = u * k2;
    let crit = statrs::distribution::ContinuousCDF::inverse_cdf(
        &statrs::distribution::ChiSquared::new(df as f64).expect("positive df"),
        0.95,
    );
    let m = ok.len() as f64;
    let size = SizeSummary {
        u,
        k2,
        df,
        failures: stats.len() - ok.len(),
        rejection_rate: ok.iter().filter(|&&s| s > crit).count() as f64 / m,
        mean_statistic: ok.iter().sum::<f64>() / m,
        ks_distance: ks_distance(&ok, |x| chi2_cdf(x, df)),
        statistics: ok,
    };
    Ok(SimulationReport {
        study: StudyKind::SizeCalibration,
        spec: spec.clone(),
        reps,
        theoretical: None,
        estimators: Vec::new(),
        dimension_frequencies: Vec::new(),
        curve: Vec::new(),
        size: Some(size),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
