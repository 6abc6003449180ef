//! Error type shared by every module of the crate.

use crate::linalg::StiefelSolution;
use thiserror::Error;

/// Failures reported by fitting, inference and simulation routines.
#[derive(Debug, Error)]
pub enum EnvError {
    #[error("matrix `{what}` is not positive definite")]
    NonPositiveDefinite { what: String },

    #[error("matrix `{what}` is not symmetric (max asymmetry {asym:e})")]
    NotSymmetric { what: String, asym: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("invalid dimension {dim} for {context} (admissible range {lo}..={hi})")]
    InvalidDimension {
        context: String,
        dim: usize,
        lo: usize,
        hi: usize,
    },

    /// The optimizer hit its sweep budget. `best` holds the best iterate found.
    #[error("optimizer did not converge after {sweeps} sweeps (last relative change {rel_change:e})")]
    NoConvergence {
        sweeps: usize,
        rel_change: f64,
        best: Box<StiefelSolution>,
    },

    #[error("within-subject design matrix U does not have full column rank")]
    RankDeficientU,

    #[error("sample moment `{which}` is singular")]
    SingularMoment { which: String },

    #[error("predictor matrix is singular (rank deficient or constant column)")]
    SingularDesign,

    #[error("scaled envelope with p = {p}, k = {k}, v = {v} is not identifiable (need p(k - v) >= k - 1)")]
    Unidentifiable { p: usize, k: usize, v: usize },

    #[error("invalid row partition: {0}")]
    InvalidPartition(String),

    #[error("contrast matrix does not have full column rank")]
    RankDeficientContrast,

    #[error("asymptotic variance has a negative diagonal entry at index {index} ({value:e})")]
    DegenerateVariance { index: usize, value: f64 },

    #[error("invalid scenario: {0}")]
    InvalidSpec(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl EnvError {
    /// True for failures of the iterative optimizer rather than of the data.
    pub fn is_convergence(&self) -> bool {
        matches!(self, EnvError::NoConvergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, EnvError>;
