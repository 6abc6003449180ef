use crate::data::DesignSpec;
use clap::{Args, Parser, Subcommand};
use envcore::sim::{PredictorCorr, ScenarioId};
use envcore::{InterceptMode, Method};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "envcore", version, about = "Envelope and constrained estimators for multivariate linear regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an estimator to a data set and write fit.json, tables.csv and plot data.
    Fit(FitArgs),
    /// Run a seeded simulation study and write report.json, tables.csv and plot data.
    Simulate(SimulateArgs),
}

/// An envelope dimension or `bic` to select it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimArg {
    Bic,
    Fixed(usize),
}

impl std::str::FromStr for DimArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("bic") {
            return Ok(DimArg::Bic);
        }
        s.parse().map(DimArg::Fixed).map_err(|_| format!("expected an integer or 'bic', got '{s}'"))
    }
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VAL, got '{s}'"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse_scenario(s: &str) -> Result<ScenarioId, String> {
    s.parse().map_err(|e: envcore::EnvError| e.to_string())
}

fn parse_corr(s: &str) -> Result<PredictorCorr, String> {
    if s == "factor" {
        return Ok(PredictorCorr::FactorModel);
    }
    match s.strip_prefix("cs:").map(str::parse::<f64>) {
        Some(Ok(rho)) => Ok(PredictorCorr::CompoundSymmetric(rho)),
        _ => Err(format!("expected 'factor' or 'cs:RHO', got '{s}'")),
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV file with a header row, or `@dental` for the bundled data.
    #[arg(long)]
    pub data: String,
    /// Response columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub responses: Option<Vec<String>>,
    /// Select every column whose name starts with this prefix as a response.
    #[arg(long)]
    pub response_prefix: Option<String>,
    /// Predictor columns; defaults to every non-response column except `id`.
    #[arg(long, value_delimiter = ',')]
    pub predictors: Option<Vec<String>>,
    /// Measurement times for the poly/trig designs; defaults to the trailing
    /// numbers of the response names.
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    #[arg(long)]
    pub model: Method,
    /// Envelope dimension for em/ecm.
    #[arg(long)]
    pub u: Option<DimArg>,
    /// Envelope dimension for secm.
    #[arg(long)]
    pub v: Option<DimArg>,
    /// Within-subject design: a CSV file, poly:D, trig:T or identity.
    #[arg(long = "U")]
    pub design: Option<DesignSpec>,
    #[arg(long, default_value = "model3")]
    pub intercept: InterceptMode,
    /// Test that the last K2 rows of alpha vanish (ecm only).
    #[arg(long, value_name = "K2")]
    pub test_rows: Option<usize>,
    /// CSV with the p x p1 contrast matrix c1.
    #[arg(long)]
    pub contrast: Option<PathBuf>,
    /// CSV with a new predictor value for the profile estimate.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Envelope dimension for --contrast/--profile; defaults to the fitted
    /// ecm dimension, or k for other models.
    #[arg(long)]
    pub u1: Option<DimArg>,
    /// Seed for the optimizer's random starts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optimizer settings: tol, max_sweeps, random_starts, grid, jitter,
    /// secm_tol, secm_max_iter.
    #[arg(long, value_parser = parse_kv)]
    pub tol: Vec<(String, String)>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// s1, s2, bias_sweep, ecm_star, null_test or custom (with --spec).
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: ScenarioId,
    /// JSON scenario description, required for `custom`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Design seed. The default fixes the design used in the reference runs.
    #[arg(long, default_value_t = 105)]
    pub seed: u64,
    /// Override the sample size of the preset.
    #[arg(long)]
    pub n: Option<usize>,
    /// Envelope dimension used by the study's envelope estimator.
    #[arg(long)]
    pub u: Option<DimArg>,
    /// Values of k for the bias sweep, e.g. 1-20 or 1,3,6.
    #[arg(long)]
    pub k_grid: Option<String>,
    /// Number of trailing rows tested in the null_test study.
    #[arg(long, default_value_t = 1)]
    pub k2: usize,
    /// Predictor covariance: factor or cs:RHO.
    #[arg(long, value_parser = parse_corr)]
    pub corr: Option<PredictorCorr>,
    /// Loading of the envelope on the last D coordinate (null_test power runs).
    #[arg(long)]
    pub tail_loading: Option<f64>,
    #[arg(long, value_parser = parse_kv)]
    pub tol: Vec<(String, String)>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `1-20` or `1,3,6`.
pub fn parse_grid(s: &str) -> Result<Vec<usize>, String> {
    if let Some((a, b)) = s.split_once('-') {
        let a: usize = a.trim().parse().map_err(|_| format!("bad grid '{s}'"))?;
        let b: usize = b.trim().parse().map_err(|_| format!("bad grid '{s}'"))?;
        if a > b {
            return Err(format!("empty grid '{s}'"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| format!("bad grid '{s}'"))).collect()
}
