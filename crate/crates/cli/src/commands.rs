use crate::args::{parse_grid, DimArg, FitArgs, SimulateArgs};
use crate::data::{load_data, read_numeric_csv, ColumnChoice, DataSummary, LoadedData};
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, opt, plot_row, write_csv, write_json, PLOT_HEADER};
use envcore::inference::{
    estimate_profile, fit_contrast, select_dimension, test_rows, wald_pvalues, ContrastFit, DimensionScore, EnvelopeKind,
    ProfileEstimate, TestResult, WaldResult,
};
use envcore::sim::{
    run_bias_sweep, run_ecm_study, run_efficiency_study, run_size_calibration, DimChoice, ScenarioId, ScenarioSpec,
    SimulationReport, StudyKind, StudyOptions,
};
use envcore::{fit_cm, fit_ecm, fit_em, fit_secm, fit_um, EnvelopeFit, FitOptions, Method};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::path::Path;

/// Applies `--tol KEY=VAL` overrides.
pub fn fit_options(pairs: &[(String, String)], seed: u64) -> CliResult<FitOptions> {
    let mut o = FitOptions::default();
    o.stiefel.seed = seed;
    for (k, v) in pairs {
        let bad = || CliError::data(format!("--tol {k}={v}: invalid value"));
        match k.as_str() {
            "tol" => o.stiefel.tol = v.parse().map_err(|_| bad())?,
            "max_sweeps" => o.stiefel.max_sweeps = v.parse().map_err(|_| bad())?,
            "random_starts" => o.stiefel.n_random_starts = v.parse().map_err(|_| bad())?,
            "grid" => o.stiefel.grid = v.parse().map_err(|_| bad())?,
            "jitter" => o.stiefel.jitter = v.parse().map_err(|_| bad())?,
            "secm_tol" => o.secm_tol = v.parse().map_err(|_| bad())?,
            "secm_max_iter" => o.secm_max_iter = v.parse().map_err(|_| bad())?,
            _ => {
                return Err(CliError::data(format!(
                    "--tol: unknown key '{k}' (tol, max_sweeps, random_starts, grid, jitter, secm_tol, secm_max_iter)"
                )))
            }
        }
    }
    if !(o.stiefel.tol > 0.0) || o.stiefel.grid < 2 {
        return Err(CliError::data("--tol: tol must be positive and grid at least 2"));
    }
    Ok(o)
}

#[derive(Debug, Serialize)]
pub struct DesignOutput {
    pub spec: String,
    #[serde(serialize_with = "rows")]
    pub matrix: DMatrix<f64>,
}

fn rows<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let v: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    v.serialize(s)
}

#[derive(Debug, Serialize)]
pub struct SelectionOutput {
    pub kind: EnvelopeKind,
    pub dim: usize,
    pub trace: Vec<DimensionScore>,
}

/// Contents of `fit.json`.
#[derive(Debug, Serialize)]
pub struct FitOutput {
    pub command: &'static str,
    pub data: DataSummary,
    pub design: Option<DesignOutput>,
    pub fit: EnvelopeFit,
    pub selection: Option<SelectionOutput>,
    pub wald: WaldResult,
    pub row_test: Option<TestResult>,
    pub contrast: Option<ContrastFit>,
    pub profile: Option<ProfileEstimate>,
}

fn kind_of(m: Method) -> Option<EnvelopeKind> {
    match m {
        Method::Em => Some(EnvelopeKind::Em),
        Method::Ecm => Some(EnvelopeKind::Ecm),
        Method::Secm => Some(EnvelopeKind::Secm),
        _ => None,
    }
}

fn fit_model(
    args: &FitArgs,
    d: &LoadedData,
    design: Option<&DMatrix<f64>>,
    opts: &FitOptions,
) -> CliResult<(EnvelopeFit, Option<SelectionOutput>)> {
    let data = &d.data;
    let mode = args.intercept;
    let need_u = || design.ok_or_else(|| CliError::data(format!("--model {} needs --U", args.model)));
    let dim = match args.model {
        Method::Secm => args.v.or(args.u),
        _ => args.u,
    };
    let ctx = |what: &str| format!("{} fit of {}{what}", args.model, d.source);
    if let (Some(kind), Some(DimArg::Bic)) = (kind_of(args.model), dim) {
        let sel = select_dimension(data, kind, design, mode, opts).map_err(CliError::fit(ctx(" (dimension selection)")))?;
        let out = SelectionOutput { kind, dim: sel.dim, trace: sel.trace };
        return Ok((sel.fit, Some(out)));
    }
    let fixed = |flag: &str| match dim {
        Some(DimArg::Fixed(u)) => Ok(u),
        _ => Err(CliError::data(format!("--model {} needs --{flag} INT or --{flag} bic", args.model))),
    };
    let fit = match args.model {
        Method::Um => fit_um(data),
        Method::Cm => fit_cm(data, need_u()?, mode),
        Method::Em => fit_em(data, fixed("u")?, opts),
        Method::Ecm => fit_ecm(data, need_u()?, mode, fixed("u")?, opts),
        Method::Secm => fit_secm(data, need_u()?, mode, fixed("v")?, opts),
    }
    .map_err(CliError::fit(ctx("")))?;
    Ok((fit, None))
}

pub fn run_fit(args: &FitArgs) -> CliResult<()> {
    let cols = ColumnChoice {
        responses: args.responses.as_deref(),
        response_prefix: args.response_prefix.as_deref(),
        predictors: args.predictors.as_deref(),
        times: args.times.as_deref(),
    };
    let d = load_data(&args.data, &cols)?;
    let opts = fit_options(&args.tol, args.seed)?;
    let design = match &args.design {
        Some(spec) => Some(DesignOutput { spec: spec.label(), matrix: spec.build(d.data.r(), &d.times)? }),
        None => None,
    };
    let u_mat = design.as_ref().map(|x| &x.matrix);
    let (fit, selection) = fit_model(args, &d, u_mat, &opts)?;
    log::info!("{} fit: loglik {:.6}, bic {:.6}, dim {:?}", fit.method, fit.loglik, fit.bic, fit.dim);
    let wald = wald_pvalues(&fit).map_err(CliError::fit("Wald p-values"))?;

    let extras_need_u = |flag: &str| {
        u_mat.ok_or_else(|| CliError::data(format!("{flag} needs a within-subject design --U")))
    };
    let row_test = match args.test_rows {
        Some(k2) => {
            if fit.method != Method::Ecm {
                return Err(CliError::data("--test-rows applies to --model ecm"));
            }
            let u = fit.dim.unwrap_or(0);
            let t = test_rows(&d.data, extras_need_u("--test-rows")?, u, k2, args.intercept, &opts)
                .map_err(CliError::fit("row test"))?;
            Some(t)
        }
        None => None,
    };
    let u1 = |k: usize| -> CliResult<usize> {
        match args.u1 {
            Some(DimArg::Fixed(v)) => Ok(v),
            Some(DimArg::Bic) => Err(CliError::data("--u1 takes an integer")),
            None => Ok(if fit.method == Method::Ecm { fit.dim.unwrap_or(k) } else { k }),
        }
    };
    let contrast = match &args.contrast {
        Some(path) => {
            let u = extras_need_u("--contrast")?;
            let c1 = read_numeric_csv(path)?;
            let c = fit_contrast(&d.data, u, &c1, u1(u.ncols())?, args.intercept, &opts)
                .map_err(CliError::fit(format!("contrast from {}", path.display())))?;
            Some(c)
        }
        None => None,
    };
    let profile = match &args.profile {
        Some(path) => {
            let u = extras_need_u("--profile")?;
            let x = read_numeric_csv(path)?;
            if x.len() != d.data.p() {
                return Err(CliError::data(format!(
                    "{}: expected {} predictor values, found {}",
                    path.display(),
                    d.data.p(),
                    x.len()
                )));
            }
            let x_new = DVector::from_iterator(x.len(), x.transpose().iter().copied());
            let pr = estimate_profile(&d.data, u, &x_new, u1(u.ncols())?, &opts)
                .map_err(CliError::fit(format!("profile from {}", path.display())))?;
            Some(pr)
        }
        None => None,
    };

    ensure_dir(&args.out)?;
    write_fit_tables(&args.out, &d, &fit, &wald)?;
    write_coefficient_plot(&args.out, &d, &fit)?;
    if let Some(pr) = &profile {
        write_profile_plot(&args.out, &d, pr)?;
    }
    let out = FitOutput {
        command: "fit",
        data: d.summary(),
        design,
        fit,
        selection,
        wald,
        row_test,
        contrast,
        profile,
    };
    write_json(&args.out.join("fit.json"), &out)
}

fn write_fit_tables(dir: &Path, d: &LoadedData, fit: &EnvelopeFit, wald: &WaldResult) -> CliResult<()> {
    let se = fit.standard_errors();
    let avar = fit.avar_diag();
    let mut rows = Vec::new();
    for j in 0..fit.p {
        for i in 0..fit.r {
            rows.push(vec![
                fit.method.to_string(),
                d.responses[i].clone(),
                d.predictors[j].clone(),
                fit.beta[(i, j)].to_string(),
                se[(i, j)].to_string(),
                avar[(i, j)].to_string(),
                wald.p_values[(i, j)].to_string(),
            ]);
        }
    }
    write_csv(
        &dir.join("tables.csv"),
        &["estimator", "response", "predictor", "beta", "se", "avar", "p_value"],
        &rows,
    )
}

const Z95: f64 = 1.959963984540054;

fn write_coefficient_plot(dir: &Path, d: &LoadedData, fit: &EnvelopeFit) -> CliResult<()> {
    let se = fit.standard_errors();
    let mut rows = Vec::new();
    for j in 0..fit.p {
        for i in 0..fit.r {
            let b = fit.beta[(i, j)];
            let h = Z95 * se[(i, j)];
            rows.push(plot_row(&d.predictors[j], d.times[i], b, b - h, b + h));
        }
    }
    write_csv(&dir.join("coefficients.csv"), &PLOT_HEADER, &rows)
}

fn write_profile_plot(dir: &Path, d: &LoadedData, pr: &ProfileEstimate) -> CliResult<()> {
    let mut rows = Vec::new();
    for (series, mean, se) in [
        ("envelope", &pr.mean, pr.standard_errors()),
        ("cm", &pr.mean_cm, pr.standard_errors_cm()),
    ] {
        for i in 0..mean.len() {
            let h = Z95 * se[i];
            rows.push(plot_row(series, d.times[i], mean[i], mean[i] - h, mean[i] + h));
        }
    }
    write_csv(&dir.join("profile.csv"), &PLOT_HEADER, &rows)
}

fn scenario_spec(args: &SimulateArgs) -> CliResult<ScenarioSpec> {
    let mut spec = match (&args.spec, args.scenario) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(CliError::io(path.display().to_string()))?;
            let mut s: ScenarioSpec = serde_json::from_str(&text)
                .map_err(|e| CliError::data(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column())))?;
            s.seed = args.seed;
            s
        }
        (None, ScenarioId::Custom) => return Err(CliError::data("--scenario custom needs --spec FILE")),
        (None, id) => ScenarioSpec::preset(id, args.seed).map_err(CliError::fit("scenario"))?,
    };
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(c) = args.corr {
        spec.predictor_corr = c;
    }
    if let Some(t) = args.tail_loading {
        spec.tail_loading = t;
    }
    spec.validate().map_err(CliError::fit("scenario"))?;
    Ok(spec)
}

pub fn run_simulate(args: &SimulateArgs) -> CliResult<()> {
    let spec = scenario_spec(args)?;
    let fit = fit_options(&args.tol, args.seed)?;
    let default_dim = match spec.scenario_id {
        ScenarioId::S1 | ScenarioId::S2 => DimChoice::Bic,
        _ => DimChoice::Fixed(spec.u),
    };
    let dim = match args.u {
        Some(DimArg::Bic) => DimChoice::Bic,
        Some(DimArg::Fixed(u)) => DimChoice::Fixed(u),
        None => default_dim,
    };
    let opts = StudyOptions { fit, dim };
    let ctx = CliError::fit(format!("simulation {:?}", spec.scenario_id));
    let report = match spec.scenario_id {
        ScenarioId::BiasSweep => {
            let grid = match &args.k_grid {
                Some(g) => parse_grid(g).map_err(CliError::Data)?,
                None => (1..=spec.r).collect(),
            };
            run_bias_sweep(&spec, &grid, args.reps, &opts)
        }
        ScenarioId::NullTest => run_size_calibration(&spec, args.k2, args.reps, &opts),
        _ => match spec.generator {
            envcore::sim::Generator::Envelope => run_efficiency_study(&spec, args.reps, &opts),
            envcore::sim::Generator::Conditional => run_ecm_study(&spec, args.reps, &opts),
        },
    }
    .map_err(ctx)?;
    log::info!("{:?} study finished in {:.1}s", report.study, report.wall_clock_secs);
    ensure_dir(&args.out)?;
    write_json(&args.out.join("report.json"), &report)?;
    write_sim_tables(&args.out, &report)?;
    write_sim_plots(&args.out, &report)
}

fn write_sim_tables(dir: &Path, rep: &SimulationReport) -> CliResult<()> {
    let mut rows = Vec::new();
    for e in &rep.estimators {
        rows.push(vec![
            e.name.clone(),
            e.reps_ok.to_string(),
            e.failures.to_string(),
            e.mse_mean.to_string(),
            e.mse_quantiles[1].to_string(),
            e.mse_quantiles[2].to_string(),
            e.mse_quantiles[3].to_string(),
            e.mean_plugin_avar.to_string(),
            opt(e.theoretical_avar),
            e.mc_variance.to_string(),
            e.max_abs_bias.to_string(),
            e.max_bias_z.to_string(),
            e.pooled_bias.to_string(),
            e.pooled_bias_z.to_string(),
        ]);
    }
    write_csv(
        &dir.join("tables.csv"),
        &[
            "estimator",
            "reps_ok",
            "failures",
            "mse_mean",
            "mse_q25",
            "mse_median",
            "mse_q75",
            "mean_plugin_avar",
            "theoretical_avar",
            "mc_variance",
            "max_abs_bias",
            "max_bias_z",
            "pooled_bias",
            "pooled_bias_z",
        ],
        &rows,
    )
}

fn write_sim_plots(dir: &Path, rep: &SimulationReport) -> CliResult<()> {
    match rep.study {
        StudyKind::BiasSweep => {
            let mut rows = Vec::new();
            for c in &rep.curve {
                rows.push(plot_row("cm", c.k, c.mse_mean, c.mse_mean - Z95 * c.mse_se, c.mse_mean + Z95 * c.mse_se));
            }
            for e in &rep.estimators {
                for c in &rep.curve {
                    rows.push(plot_row(&e.name, c.k, e.mse_mean, e.mse_quantiles[1], e.mse_quantiles[3]));
                }
            }
            write_csv(&dir.join("mse_curve.csv"), &PLOT_HEADER, &rows)
        }
        StudyKind::SizeCalibration => {
            let size = rep.size.as_ref().expect("calibration report has a size summary");
            let mut s = size.statistics.clone();
            s.sort_by(f64::total_cmp);
            let m = s.len() as f64;
            let mut rows = Vec::new();
            for (i, &x) in s.iter().enumerate() {
                let f = (i + 1) as f64 / m;
                rows.push(plot_row("empirical", x, f, f, f));
            }
            for &x in &s {
                let f = envcore::inference::chi2_cdf(x, size.df);
                rows.push(plot_row("chi2", x, f, f, f));
            }
            write_csv(&dir.join("null_cdf.csv"), &PLOT_HEADER, &rows)
        }
        _ => {
            let mut rows = Vec::new();
            for e in &rep.estimators {
                let q = e.mse_quantiles;
                rows.push(plot_row(&e.name, "mse", q[2], q[1], q[3]));
            }
            write_csv(&dir.join("mse_quantiles.csv"), &PLOT_HEADER, &rows)
        }
    }
}
