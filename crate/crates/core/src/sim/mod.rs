//! Seeded simulation designs and Monte Carlo studies: efficiency of the
//! envelope and constrained estimators, bias of `cm` under a misspecified
//! `U`, the envelope inside the constrained model, and calibration of the
//! row test. Every replicate draws from its own ChaCha stream keyed by
//! `(seed, replicate)`, so results do not depend on the thread count.

mod scenario;
mod studies;

pub use scenario::{generate_scenario, Design, Generator, PredictorCorr, ScenarioId, ScenarioSpec, TheoreticalAvar, Truth};
pub use studies::{
    ks_distance, run_bias_sweep, run_ecm_study, run_efficiency_study, run_size_calibration, CurvePoint, DimChoice,
    DimensionFrequency, EstimatorSummary, SimulationReport, SizeSummary, StudyKind, StudyOptions,
};
